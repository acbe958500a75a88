#!/usr/bin/env python3
"""Builds the synthetic three-service corpus and its expected reports.

The expected files are derived from the planted ground truth below (host
labels, key votes, disclosures), never from the C++ pipeline.
Run from anywhere; writes next to this script.
"""
import csv
import io
import json
import os
import shutil
from datetime import datetime, timedelta, timezone

HERE = os.path.dirname(os.path.abspath(__file__))
ROOT = os.path.normpath(os.path.join(HERE, "..", "..", ".."))

TEMPS = [0.0, 0.25, 0.5, 0.75, 1.0]
THRESHOLD = 0.8
TAU = 0.9
CATEGORIES = ["child", "adolescent", "adult", "logged_out"]
DEST_ORDER = ["first", "first_ats", "third", "third_ats"]

SERVICES = [
    {"name": "Roblox", "first_party_eslds": ["roblox.com", "rbxcdn.com"], "owner_orgs": ["Roblox Corporation"]},
    {"name": "Minecraft", "first_party_eslds": ["minecraft.net"], "owner_orgs": ["Microsoft Corporation"]},
    {"name": "Quizlet", "first_party_eslds": ["quizlet.com"], "owner_orgs": ["Quizlet Inc."]},
]

# host -> (esld, label, owner); assigned by hand from the blocklists and entity map below
HOSTS = {
    "www.roblox.com": ("roblox.com", "first", "Roblox Corporation"),
    "apis.roblox.com": ("roblox.com", "first", "Roblox Corporation"),
    "metrics.roblox.com": ("roblox.com", "first_ats", "Roblox Corporation"),
    "tr.rbxcdn.com": ("rbxcdn.com", "first", "Roblox Corporation"),
    "stats.g.doubleclick.net": ("doubleclick.net", "third_ats", "Google LLC"),
    "securepubads.g.doubleclick.net": ("doubleclick.net", "third_ats", "Google LLC"),
    "www.google-analytics.com": ("google-analytics.com", "third_ats", "Google LLC"),
    "d1x2y3.cloudfront.net": ("cloudfront.net", "third", "Amazon Technologies, Inc."),
    "o4501.ingest.sentry.io": ("sentry.io", "third", "Functional Software, Inc."),
    "www.minecraft.net": ("minecraft.net", "first", "Microsoft Corporation"),
    "api.minecraftservices.com": ("minecraftservices.com", "first", "Microsoft Corporation"),
    "c.clarity.ms": ("clarity.ms", "first_ats", "Microsoft Corporation"),
    "title.mgt.xboxlive.com": ("xboxlive.com", "first", "Microsoft Corporation"),
    "fonts.googleapis.com": ("googleapis.com", "third", "Google LLC"),
    "aax.amazon-adsystem.com": ("amazon-adsystem.com", "third_ats", "Amazon Technologies, Inc."),
    "c.amazon-adsystem.com": ("amazon-adsystem.com", "third_ats", "Amazon Technologies, Inc."),
    "quizlet.com": ("quizlet.com", "first", "Quizlet Inc."),
    "www.quizlet.com": ("quizlet.com", "first", "Quizlet Inc."),
    "connect.facebook.net": ("facebook.net", "third_ats", "Meta Platforms, Inc."),
    "match.adsrvr.org": ("adsrvr.org", "third_ats", "The Trade Desk"),
    "quizlet.app.link": ("app.link", "third_ats", None),
    "static.cdn.example.co.uk": ("example.co.uk", "third", None),
    "192.0.2.10": ("192.0.2.10", "third", None),
}

ENTITY_MAP = {
    "roblox.com": "Roblox Corporation",
    "rbxcdn.com": "Roblox Corporation",
    "doubleclick.net": "Google LLC",
    "google-analytics.com": "Google LLC",
    "googleapis.com": "Google LLC",
    "cloudfront.net": "Amazon Technologies, Inc.",
    "amazon-adsystem.com": "Amazon Technologies, Inc.",
    "sentry.io": "Functional Software, Inc.",
    "minecraft.net": "Microsoft Corporation",
    "minecraftservices.com": "Microsoft Corporation",
    "clarity.ms": "Microsoft Corporation",
    "xboxlive.com": "Microsoft Corporation",
    "quizlet.com": "Quizlet Inc.",
    "facebook.net": "Meta Platforms, Inc.",
    "adsrvr.org": "The Trade Desk",
}

BLOCKLIST_A = """# hosts-style entries match exactly; bare domains cover subdomains
0.0.0.0 metrics.roblox.com
0.0.0.0 connect.facebook.net
doubleclick.net
google-analytics.com
amazon-adsystem.com
adsrvr.org
"""
BLOCKLIST_B = """clarity.ms
app.link
"""

A, B = "Account Settings", "App or Service Usage"
# key -> one (label, confidence) per temperature; None marks a malformed response line
VOTES = {
    "email": [("Contact Information", 0.95)] * 5,
    "uid": [("Aliases", 0.9), ("Aliases", 0.85), ("Aliases", 0.9), ("Customer Numbers", 0.6), ("Aliases", 0.8)],
    "username": [("Name", 0.9)] * 5,
    "password": [("Login Information", 1.0)] * 5,
    "deviceId": [("Device Hardware Identifiers", 0.9)] * 5,
    "device_id": [("Device Hardware Identifiers", 0.9)] * 5,
    "adid": [("Device Software Identifiers", 0.95)] * 5,
    "os": [("Device Information", 0.9)] * 5,
    "screen_w": [("Device Information", 0.85)] * 5,
    "lang": [("Language", 0.9)] * 5,
    "birthYear": [("Age", 0.9), ("Age", 0.95), ("Age", 0.9), ("Age", 0.85), ("Age", 0.9)],
    "gender": [("Gender/Sex", 0.95)] * 5,
    "lat": [("Precise Geolocation", 0.95)] * 5,
    "country": [("Coarse Geolocation", 0.9)] * 5,
    "tz": [("Location Time", 0.8)] * 5,
    "chatMessage": [("Communications", 0.9)] * 5,
    "rtt": [("Network Connection Information", 0.9)] * 5,
    "accel": [("Sensor Data", 0.85)] * 5,
    "sessionId": [(B, 0.9)] * 5,
    "event": [(B, 0.85)] * 5,
    "page_url": [("Service Information", 0.9)] * 5,
    "sdk_version": [("Service Information", 0.9)] * 5,
    "IsOptOutEmailShown": [(A, 0.9), ("Contact Information", 0.8), (A, 0.85), (A, 0.9), ("Contact Information", 0.7)],
    "interests": [("Inference About Users", 0.85)] * 5,
    "ad_slot": [("Products and Advertising", 0.9)] * 5,
    "school": [("Personal History", 0.85)] * 5,
    "flag": [(A, 0.9), (A, 0.9), None, (A, 0.9), (A, 0.9)],
    "zq": [("Service Information", 0.5), ("Service Information", 0.4), (B, 0.3), ("Service Information", 0.5), (B, 0.2)],
    "blob": [None] * 5,
}

# (platforms, host, keys, trace kind for age traces)
AC, LI = "account_creation", "logged_in"
ROBLOX_CHILD = [
    ("both", "www.roblox.com", ["username", "birthYear", "password"], AC),
    ("both", "apis.roblox.com", ["uid", "chatMessage", "sessionId"], LI),
    ("mobile", "metrics.roblox.com", ["event", "device_id", "os"], LI),
    ("both", "tr.rbxcdn.com", [], LI),
    ("mobile", "o4501.ingest.sentry.io", ["sdk_version", "uid"], LI),
]
ROBLOX_TEEN = ROBLOX_CHILD + [("web", "stats.g.doubleclick.net", ["adid", "uid", "lang"], LI)]
ROBLOX_ADULT = ROBLOX_TEEN + [("web", "www.google-analytics.com", ["uid", "page_url", "country", "zq"], LI)]
MINECRAFT_AGE = [
    ("both", "www.minecraft.net", ["email", "password", "birthYear"], AC),
    ("mobile", "api.minecraftservices.com", ["uid", "username", "lang", "tz"], LI),
    ("web", "c.clarity.ms", ["sessionId", "screen_w", "page_url"], LI),
    ("mobile", "title.mgt.xboxlive.com", ["deviceId", "accel", "blob"], LI),
    ("web", "fonts.googleapis.com", [], LI),
]
QUIZLET_CHILD = [
    ("both", "quizlet.com", ["username", "birthYear", "email", "password"], AC),
    ("both", "www.quizlet.com", ["sessionId", "school", "interests"], LI),
    ("web", "www.google-analytics.com", ["uid", "page_url", "lat"], LI),
    ("both", "securepubads.g.doubleclick.net", ["adid", "ad_slot"], LI),
    ("mobile", "quizlet.app.link", ["deviceId", "gender", "event"], LI),
    ("web", "match.adsrvr.org", ["uid"], LI),
]
QUIZLET_TEEN = QUIZLET_CHILD[:5] + [("web", "connect.facebook.net", ["adid", "lang", "gender"], LI)]
QUIZLET_ADULT = [
    ("both", "quizlet.com", ["username", "birthYear", "email", "password"], AC),
    ("both", "www.quizlet.com", ["sessionId", "school", "interests"], LI),
    ("both", "securepubads.g.doubleclick.net", ["adid", "ad_slot", "interests"], LI),
    ("web", "connect.facebook.net", ["adid", "lang"], LI),
    ("web", "match.adsrvr.org", ["uid", "country", "flag"], LI),
    ("mobile", "static.cdn.example.co.uk", ["rtt", "chatMessage"], LI),
]
PLAN = {
    "Roblox": {
        "child": ROBLOX_CHILD,
        "adolescent": ROBLOX_TEEN,
        "adult": ROBLOX_ADULT,
        "logged_out": [
            ("both", "www.roblox.com", ["sessionId", "lang", "page_url"], None),
            ("mobile", "metrics.roblox.com", ["event", "os", "device_id"], None),
            ("web", "stats.g.doubleclick.net", ["adid", "page_url"], None),
            ("both", "d1x2y3.cloudfront.net", [], None),
            ("mobile", "o4501.ingest.sentry.io", ["sdk_version", "os"], None),
        ],
    },
    "Minecraft": {
        "child": MINECRAFT_AGE,
        "adolescent": MINECRAFT_AGE,
        "adult": MINECRAFT_AGE,
        "logged_out": [
            ("both", "www.minecraft.net", ["lang", "page_url"], None),
            ("web", "c.clarity.ms", ["sessionId", "screen_w"], None),
            ("mobile", "aax.amazon-adsystem.com", ["adid", "ad_slot", "country"], None),
        ],
    },
    "Quizlet": {
        "child": QUIZLET_CHILD,
        "adolescent": QUIZLET_TEEN,
        "adult": QUIZLET_ADULT,
        "logged_out": [
            ("both", "quizlet.com", ["page_url", "lang", "IsOptOutEmailShown"], None),
            ("both", "securepubads.g.doubleclick.net", ["adid", "ad_slot", "page_url"], None),
            ("web", "connect.facebook.net", ["event", "page_url"], None),
            ("web", "static.cdn.example.co.uk", ["rtt"], None),
            ("mobile", "quizlet.app.link", ["deviceId", "os", "event"], None),
        ],
    },
}
# Encrypted mobile contacts (no payload): service -> category -> hosts
ENCRYPTED = {
    "Roblox": {"child": ["apis.roblox.com"], "logged_out": ["d1x2y3.cloudfront.net"]},
    "Minecraft": {"adult": ["title.mgt.xboxlive.com"]},
    "Quizlet": {"adolescent": ["c.amazon-adsystem.com"], "logged_out": ["192.0.2.10"]},
}

# service -> age ("all" covers every age) -> [(level-2 category, dest label)]
DISCLOSURES = {
    "Roblox": {
        "all": [("Personal Identifiers", "first"), ("User Interests and Behaviors", "first"),
                ("User Communications", "first")],
        "adult": [("Personal Characteristics", "first"), ("Device Identifiers", "first_ats"),
                  ("User Interests and Behaviors", "first_ats")],
    },
    "Minecraft": {
        "all": [("Personal Identifiers", "first"), ("Personal Characteristics", "first"),
                ("Geolocation", "first"), ("User Interests and Behaviors", "first_ats"),
                ("Device Identifiers", "first_ats"), ("Device Identifiers", "first"),
                ("Sensors", "first"), ("Personal Identifiers", "first_ats")],
    },
    "Quizlet": {
        "child": [("Personal Identifiers", "first")],
        "adult": [("Personal Identifiers", "first"), ("Personal Characteristics", "first"),
                  ("User Interests and Behaviors", "first"), ("Personal History", "first")],
    },
}

BASE_TIME = datetime(2023, 10, 2, 15, 0, 0, tzinfo=timezone.utc)


def load_ontology():
    with open(os.path.join(ROOT, "data", "ontology.json")) as f:
        doc = json.load(f)
    level2_of, kind_of, level2_order = {}, {}, []
    for l1 in doc["level1"]:
        for l2 in l1["level2"]:
            level2_order.append(l2["name"])
            for l3 in l2["level3"]:
                level2_of[l3["name"]] = l2["name"]
                kind_of[l3["name"]] = l1["name"]
    return level2_of, kind_of, level2_order


def body_for(keys, seed):
    """JSON body whose leaf keys are exactly `keys`; device fields nested two deep."""
    top, device = {}, {}
    for i, k in enumerate(keys):
        value = f"v{seed}-{i}"
        if k in ("os", "screen_w", "deviceId", "device_id", "accel"):
            device[k] = value if k != "screen_w" else 1080
        else:
            top[k] = value
    if device:
        top["ctx"] = {"device": device, "tags": [{"sdk_version": "3.1"}]} if "sdk_version" in keys else {"device": device}
        if "sdk_version" in keys:
            top.pop("sdk_version", None)
    return top


def build_traces():
    """Yields (file name, meta, list of request dicts)."""
    traces = []
    stamp = [0]

    def tick():
        stamp[0] += 1
        return BASE_TIME + timedelta(seconds=stamp[0])

    for svc in SERVICES:
        name = svc["name"]
        for category in CATEGORIES:
            kinds = [None] if category == "logged_out" else [AC, LI]
            for platform in ("web", "mobile"):
                for kind in kinds:
                    trace_kind = "logged_out" if kind is None else kind
                    requests = []
                    for idx, (where, host, keys, req_kind) in enumerate(PLAN[name][category]):
                        if kind is not None and req_kind != kind:
                            continue
                        if where not in ("both", platform):
                            continue
                        requests.append({"host": host, "keys": keys, "encrypted": False, "seed": idx, "time": tick()})
                    # page furniture with no payload
                    first_host = PLAN[name][category][0][1]
                    requests.append({"host": first_host, "keys": [], "encrypted": False, "seed": 90, "time": tick(),
                                     "path": "/static/app.css"})
                    requests.append({"host": first_host, "keys": [], "encrypted": False, "seed": 92, "time": tick(),
                                     "path": "/img/logo.png"})
                    if platform == "web":
                        requests.append({"host": "d1x2y3.cloudfront.net", "keys": [], "encrypted": False, "seed": 93,
                                         "time": tick(), "path": "/fonts/main.woff2"})
                    if platform == "mobile" and trace_kind != "account_creation":
                        for host in ENCRYPTED.get(name, {}).get(category, []):
                            requests.append({"host": host, "keys": [], "encrypted": True, "seed": 91, "time": tick()})
                    slug = f"{name.lower()}_{category}" + ("" if kind is None else f"_{kind}")
                    ext = "har" if platform == "web" else "json"
                    meta = {"service": name, "platform": platform, "trace_kind": trace_kind}
                    if kind is not None:
                        meta["age_group"] = category
                    traces.append((f"{slug}_{platform}.{ext}", meta, requests, category))
    return traces


def request_url(r, style):
    host = r["host"]
    path = r.get("path", f"/v1/collect/{r['seed']}")
    if style == "query" and r["keys"]:
        q = "&".join(f"{k}=x{i}" for i, k in enumerate(r["keys"]))
        return f"https://{host}{path}?{q}"
    return f"https://{host}{path}"


def write_har(path, requests):
    entries = []
    for i, r in enumerate(requests):
        style = "query" if i % 3 == 2 else ("form" if i % 3 == 1 else "json")
        url = request_url(r, style)
        req = {"method": "GET" if style == "query" or not r["keys"] else "POST", "url": url,
               "httpVersion": "HTTP/2", "headers": [{"name": "User-Agent", "value": "Mozilla/5.0"},
                                                    {"name": "Cookie", "value": "sid=abc; theme=dark"}],
               "queryString": [], "cookies": [], "headersSize": -1, "bodySize": 0}
        if style == "query" and r["keys"]:
            req["queryString"] = [{"name": k, "value": f"x{j}"} for j, k in enumerate(r["keys"])]
        elif r["keys"] and style == "form":
            text = "&".join(f"{k}=y{j}" for j, k in enumerate(r["keys"]))
            req["postData"] = {"mimeType": "application/x-www-form-urlencoded", "text": text}
        elif r["keys"]:
            req["postData"] = {"mimeType": "application/json", "text": json.dumps(body_for(r["keys"], r["seed"]))}
        entries.append({"startedDateTime": r["time"].strftime("%Y-%m-%dT%H:%M:%S.000Z"), "time": 12,
                        "request": req, "response": {"status": 200, "headers": [], "content": {"size": 0}},
                        "cache": {}, "timings": {"send": 0, "wait": 10, "receive": 2}})
    # an entry the browser recorded without a URL
    entries.append({"startedDateTime": BASE_TIME.strftime("%Y-%m-%dT%H:%M:%S.000Z"), "time": 0,
                    "request": {"method": "GET", "headers": []}, "response": {"status": 0}})
    doc = {"log": {"version": "1.2", "creator": {"name": "synthetic", "version": "1"}, "entries": entries}}
    with open(path, "w") as f:
        json.dump(doc, f, indent=1)
        f.write("\n")


def write_capture(path, requests):
    records = []
    for i, r in enumerate(requests):
        ts = int(r["time"].timestamp() * 1000)
        if r["encrypted"]:
            records.append({"direction": "out", "ts_ms": ts, "url": f"https://{r['host']}/", "method": "CONNECT",
                            "encrypted": True})
            continue
        style = "query" if i % 2 == 1 else "json"
        rec = {"direction": "out", "ts_ms": ts, "url": request_url(r, style), "method": "POST",
               "headers": [{"name": "Content-Type", "value": "application/json"}], "encrypted": False}
        if r["keys"] and style == "json":
            rec["body_text"] = json.dumps(body_for(r["keys"], r["seed"]))
            rec["content_type"] = "application/json"
        records.append(rec)
        records.append({"direction": "in", "ts_ms": ts + 5, "url": request_url(r, "plain"), "method": "POST",
                        "body_text": "{\"ok\": true, \"email\": \"never-mined\"}", "encrypted": False})
    with open(path, "w") as f:
        json.dump(records, f, indent=1)
        f.write("\n")


def fmt(v):
    s = f"{v:.4f}".rstrip("0").rstrip(".")
    return "0" if s in ("", "-0") else s


def voted_labels():
    out = {}
    for key, runs in VOTES.items():
        valid = [r for r in runs if r is not None]
        if not valid:
            continue
        counts = {}
        for label, conf in valid:
            counts.setdefault(label, []).append(conf)
        top = max(len(v) for v in counts.values())
        leaders = sorted((-(sum(v) / len(v)), label) for label, v in counts.items() if len(v) == top)
        neg_avg, label = leaders[0]
        if -neg_avg >= THRESHOLD:
            out[key] = label
    return out


def display_width(s):
    return sum(2 if ord(ch) >= 0x1F000 else 1 for ch in s)


def pad(s, width):
    return s + " " * max(0, width - display_width(s))


SYMBOL = {"both": "•", "absent": "—", "web_only": "\U0001F5B1", "mobile_only": "\U0001F4F1"}


def presence(platforms):
    web, mobile = "web" in platforms, "mobile" in platforms
    return "both" if web and mobile else "web_only" if web else "mobile_only" if mobile else "absent"


def expected_outputs(traces):
    level2_of, kind_of, level2_order = load_ontology()
    labels = voted_labels()
    flows = {}  # (service, category, level3, esld, dest) -> platforms
    for _, meta, requests, category in traces:
        for r in requests:
            if r["encrypted"]:
                continue
            esld, dest, _owner = HOSTS[r["host"]]
            for label in {labels[k] for k in r["keys"] if k in labels}:
                flows.setdefault((meta["service"], category, label, esld, dest), set()).add(meta["platform"])

    # matrix
    cells = {}
    for (svc, cat, l3, esld, dest), plats in flows.items():
        cells.setdefault((svc, cat, level2_of[l3], dest), set()).update(plats)
    label_w = max([len("Data type")] + [len(n) for n in level2_order])
    cell_w, group_w = 7, 7 * 4 + 3

    def line(label, groups):
        return (pad(label, label_w) + "".join(" | " + g for g in groups)).rstrip(" ") + "\n"

    def cellrow(values):
        return pad(" ".join(pad(v, cell_w) for v in values[:3]) + " " + values[3], group_w)

    titles = {"child": "Child", "adolescent": "Adolescent", "adult": "Adult", "logged_out": "Logged-out"}
    matrix = ""
    for svc in SERVICES:
        name = svc["name"]
        matrix += name + "\n"
        matrix += line("", [pad(titles[c], group_w) for c in CATEGORIES])
        matrix += line("", [pad(pad("Collect", 16) + "Share", group_w)] * 4)
        matrix += line("Data type", [cellrow(["1st", "1st ATS", "3rd", "3rd ATS"])] * 4)
        matrix += "-" * label_w + ("-+-" + "-" * group_w) * 4 + "\n"
        for l2 in level2_order:
            groups = []
            for c in CATEGORIES:
                groups.append(cellrow([SYMBOL[presence(cells.get((name, c, l2, d), set()))] for d in DEST_ORDER]))
            matrix += line(l2, groups)
        matrix += "\n"
    matrix += f"Legend: {SYMBOL['both']} web and mobile; {SYMBOL['web_only']} web only; " \
              f"{SYMBOL['mobile_only']} mobile only; {SYMBOL['absent']} not observed\n"
    matrix += "Collect = first-party destinations; Share = third-party destinations.\n"
    matrix += "First-party destinations on a blocklist appear only under Collect 1st ATS.\n"

    # findings
    allowed = set()
    for svc, ages in DISCLOSURES.items():
        for age, pairs in ages.items():
            for a in (["child", "adolescent", "adult"] if age == "all" else [age]):
                for l2, dest in pairs:
                    allowed.add((svc, a, l2, dest))
    groups = {}
    for (svc, cat, l3, esld, dest) in flows:
        groups.setdefault((svc, cat, level2_of[l3], dest, esld), set()).add(l3)
    rows = []
    sev_r1 = {"third_ats": "high", "third": "medium", "first_ats": "low", "first": "info"}
    for (svc, cat, l2, dest, esld), l3s in groups.items():
        ev = ";".join(sorted(l3s))
        base = (svc, CATEGORIES.index(cat), level2_order.index(l2), DEST_ORDER.index(dest), esld)
        if cat == "logged_out":
            rows.append(((0,) + base, ["R1_preconsent", sev_r1[dest], svc, cat, l2, dest, esld, ev, "", "",
                                      f"{l2} sent to {dest} destination {esld} before the user disclosed an age"]))
            continue
        if cat in ("child", "adolescent") and dest == "third_ats":
            rows.append(((1,) + base, ["R2_minor_ats_sharing", "high", svc, cat, l2, dest, esld, ev, "", "",
                                      f"{l2} shared with third-party ATS {esld} in a {cat} trace"]))
        if (svc, cat, l2, dest) not in allowed:
            rows.append(((2,) + base, ["R3_undisclosed", "medium", svc, cat, l2, dest, esld, ev, "", "",
                                      f"({l2}, {dest}) is not among the disclosed {cat} data flows"]))

    def identities(svc, cat):
        return {(level2_of[l3], dest, esld) for (s, c, l3, esld, dest) in flows if s == svc and c == cat}

    def jac(a, b):
        return 1.0 if not a and not b else len(a & b) / len(a | b)

    for svc in SERVICES:
        name = svc["name"]
        ch, te, ad = identities(name, "child"), identities(name, "adolescent"), identities(name, "adult")
        if not (ch and te and ad):
            continue
        j1, j2 = jac(ch, ad), jac(te, ad)
        if j1 >= TAU and j2 >= TAU:
            rows.append(((3, name, -1, 0, 0, ""), ["R4_no_age_differentiation", "medium", name, "", "", "", "", "",
                                                   fmt(j1), fmt(j2),
                                                   f"child/adult similarity {fmt(j1)} and adolescent/adult "
                                                   f"similarity {fmt(j2)} are at least {fmt(TAU)}"]))
    rows.sort(key=lambda r: r[0])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["rule", "severity", "service", "trace_category", "category", "dest", "esld", "level3_evidence",
                "jaccard_child_adult", "jaccard_adolescent_adult", "explanation"])
    for _, r in rows:
        w.writerow(r)
    findings = buf.getvalue()
    rules = {r[1][0] for r in rows}

    # linkability counts
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["service", "trace_category", "linkable_third_parties", "third_parties"])
    for svc in SERVICES:
        name = svc["name"]
        for cat in CATEGORIES:
            received = {}
            for (s, c, l3, esld, dest) in flows:
                if s == name and c == cat and dest.startswith("third"):
                    received.setdefault(esld, set()).add(l3)
            linkable = [e for e, ls in received.items()
                        if any(kind_of[l] == "Identifiers" for l in ls)
                        and any(kind_of[l] == "Personal Information" for l in ls)]
            w.writerow([name, cat, len(linkable), len(received)])
    return matrix, findings, buf.getvalue(), rules, flows


def main():
    traces_dir = os.path.join(HERE, "traces")
    replay_dir = os.path.join(HERE, "replay")
    expected_dir = os.path.join(HERE, "expected")
    for d in (traces_dir, replay_dir, expected_dir):
        shutil.rmtree(d, ignore_errors=True)
        os.makedirs(d)

    traces = build_traces()
    manifest = []
    total = 0
    for fname, meta, requests, _ in traces:
        path = os.path.join(traces_dir, fname)
        (write_har if fname.endswith(".har") else write_capture)(path, requests)
        manifest.append(dict(file=fname, **meta))
        total += len(requests)
    with open(os.path.join(traces_dir, "manifest.json"), "w") as f:
        json.dump({"traces": manifest}, f, indent=1)
        f.write("\n")

    with open(os.path.join(HERE, "entity_map.json"), "w") as f:
        json.dump(ENTITY_MAP, f, indent=1, sort_keys=True)
        f.write("\n")
    with open(os.path.join(HERE, "ats_hosts.txt"), "w") as f:
        f.write(BLOCKLIST_A)
    with open(os.path.join(HERE, "ats_extra.txt"), "w") as f:
        f.write(BLOCKLIST_B)
    disclosures = {svc: {age: [{"category": c, "dest": d, "citation": f"{svc} privacy policy, section {i + 1}"}
                               for i, (c, d) in enumerate(pairs)] for age, pairs in ages.items()}
                   for svc, ages in DISCLOSURES.items()}
    with open(os.path.join(HERE, "disclosures.json"), "w") as f:
        json.dump({"services": disclosures}, f, indent=1)
        f.write("\n")

    with open(os.path.join(replay_dir, "responses.jsonl"), "w") as f:
        for key in sorted(VOTES):
            for t, run in zip(TEMPS, VOTES[key]):
                if run is None:
                    line = f"{key} - unsure"
                else:
                    line = f"{key} // {run[0]} // {run[1]} // planted label"
                f.write(json.dumps({"model": "gpt-4", "temperature": t, "key": key, "line": line}) + "\n")

    config = {
        "manifest": "traces/manifest.json",
        "ontology": "../../../data/ontology.json",
        "psl": "../../../data/public_suffix_list.dat",
        "blocklists": ["ats_hosts.txt", "ats_extra.txt"],
        "entity_map": "entity_map.json",
        "services": SERVICES,
        "disclosures": "disclosures.json",
        "classifier": {"mode": "ensemble", "model": "gpt-4", "temperatures": TEMPS, "batch_size": 8,
                       "parallelism": 3, "threshold": THRESHOLD, "vote": "avg", "replay_dir": "replay",
                       "backoff_ms": 1},
        "audit": {"r4_tau": TAU, "granularity": "level2"},
        "linkability": {"top_n": 10},
        "output_dir": "out",
        "seed": 20231002,
        "timestamp": "2023-10-02T15:00:00Z",
    }
    with open(os.path.join(HERE, "config.json"), "w") as f:
        json.dump(config, f, indent=1)
        f.write("\n")

    matrix, findings, counts, rules, flows = expected_outputs(traces)
    with open(os.path.join(expected_dir, "matrix.txt"), "w") as f:
        f.write(matrix)
    with open(os.path.join(expected_dir, "findings.csv"), "w") as f:
        f.write(findings)
    with open(os.path.join(expected_dir, "counts.csv"), "w") as f:
        f.write(counts)
    print(f"{len(traces)} traces, {total} requests, {len(flows)} flows, rules {sorted(rules)}")


if __name__ == "__main__":
    main()
