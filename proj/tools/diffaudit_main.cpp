#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "diffaudit/error.hpp"
#include "diffaudit/pipeline.hpp"

namespace fs = std::filesystem;
using namespace diffaudit;

namespace {

struct Options {
  std::string config;
  std::optional<std::string> out;
  std::optional<std::string> replay;
  std::optional<std::string> record;
  std::optional<double> threshold;
  std::optional<std::string> vote;
  std::optional<std::string> sample;
  std::optional<std::string> emit_sample;
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config, "Run configuration (JSON)")->required();
  cmd->add_option("--out", o.out, "Output directory (overrides output_dir)");
  cmd->add_option("--replay", o.replay, "Serve classifier responses from recorded fixtures");
  cmd->add_option("--record", o.record, "Append live classifier exchanges to <dir>/recorded.jsonl");
  cmd->add_option("--threshold", o.threshold, "Confidence threshold in [0, 1]");
  cmd->add_option("--vote", o.vote, "Vote aggregation")->check(CLI::IsMember({"max", "avg"}));
}

RunConfig load(const Options& o) {
  auto config = RunConfig::load(o.config);
  RunOverrides ov;
  if (o.out) ov.out = fs::path(*o.out);
  if (o.replay) ov.replay = fs::path(*o.replay);
  if (o.record) ov.record = fs::path(*o.record);
  ov.threshold = o.threshold;
  if (o.vote) ov.vote = parse_vote_mode(*o.vote);
  if (o.sample) ov.sample = fs::path(*o.sample);
  apply_overrides(config, ov);
  return config;
}

void report(const IngestSummary& s) {
  std::cout << "ingest: " << s.requests << " requests (" << s.encrypted << " encrypted) from "
            << s.traces << " traces, " << s.distinct_keys << " distinct keys";
  if (s.skipped_without_url) std::cout << ", " << s.skipped_without_url << " entries without URL skipped";
  if (s.unparseable_bodies) std::cout << ", " << s.unparseable_bodies << " unparseable bodies";
  std::cout << "\n";
}

void report(const ClassifySummary& s) {
  std::cout << "classify: " << s.labeled << "/" << s.distinct_keys << " keys labeled, " << s.residual
            << " residual; " << s.ensemble.calls << " calls, " << s.ensemble.cache_hits
            << " cache hits, " << s.ensemble.cache_misses << " misses";
  if (s.ensemble.failed_batches) std::cout << ", " << s.ensemble.failed_batches << " failed batches";
  std::cout << "\n";
}

int report(const AuditSummary& s) {
  std::cout << "audit: " << s.flows << " flows, " << s.contacts << " encrypted contacts, " << s.findings
            << " findings";
  for (const auto& [rule, n] : s.findings_by_rule) std::cout << " [" << rule << "=" << n << "]";
  std::cout << "\n";
  return s.findings ? 2 : 0;
}

void report(const LinkabilitySummary& s) {
  std::cout << "linkability: " << s.linkable << " of " << s.sets << " third-party sets linkable\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differential data-flow audit of general-audience services"};
  app.set_version_flag("--version", std::string(tool_version()));
  app.require_subcommand(1);

  Options o;
  auto* ingest = app.add_subcommand("ingest", "Parse traces and mine raw keys");
  auto* classify = app.add_subcommand("classify", "Label distinct raw keys");
  auto* audit_cmd = app.add_subcommand("audit", "Build flows, render the matrix and evaluate rules");
  auto* link = app.add_subcommand("linkability", "Report third parties that received linkable data");
  auto* validate = app.add_subcommand("validate-classifier", "Score the classifier on a labeled sample");
  auto* all = app.add_subcommand("run-all", "ingest, classify, audit and linkability in one go");
  for (auto* cmd : {ingest, classify, audit_cmd, link, validate, all}) add_common(cmd, o);
  validate->add_option("--sample", o.sample, "Labeled sample CSV (key,label)");
  validate->add_option("--emit-sample", o.emit_sample, "Write an unlabeled uniform key sample and stop");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    const auto config = load(o);
    if (ingest->parsed()) {
      report(run_ingest(config));
    } else if (classify->parsed()) {
      report(run_classify(config));
    } else if (audit_cmd->parsed()) {
      return report(run_audit(config));
    } else if (link->parsed()) {
      report(run_linkability(config));
    } else if (validate->parsed()) {
      std::optional<fs::path> emit;
      if (o.emit_sample) emit = fs::path(*o.emit_sample);
      auto s = run_validation(config, emit);
      if (s.emitted_sample) {
        std::cout << "validate-classifier: sample written to " << s.emitted_sample->string() << "\n";
      } else {
        for (const auto& r : s.rows) {
          std::cout << r.method << ": accuracy " << r.accuracy << " (" << r.correct << "/" << r.total << ")\n";
        }
      }
    } else if (all->parsed()) {
      report(run_ingest(config));
      report(run_classify(config));
      const int code = report(run_audit(config));
      report(run_linkability(config));
      return code;
    }
  } catch (const std::exception& e) {
    std::cerr << "diffaudit: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
