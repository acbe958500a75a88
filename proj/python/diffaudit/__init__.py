"""Python bindings for the diffaudit library."""

from ._diffaudit import (
    AuditError,
    ClassifyError,
    ConfigError,
    DestinationError,
    Error,
    IngestError,
    Ontology,
    OntologyError,
    PublicSuffixList,
    RunConfig,
    UnknownLabelError,
    baseline_classify,
    extract_fqdn,
    is_linkable,
    normalize_key,
    run_audit,
    run_classify,
    run_ingest,
    run_linkability,
    version,
)


def run_all(config_path, out=None, replay=None, threshold=None, vote=None):
    """Runs every stage and returns the per-stage summaries."""
    config = RunConfig.load(config_path, out=out, replay=replay, threshold=threshold, vote=vote)
    return {
        "ingest": run_ingest(config),
        "classify": run_classify(config),
        "audit": run_audit(config),
        "linkability": run_linkability(config),
    }
