#!/usr/bin/env python3
"""Regenerates the fixed test fixtures under tests/data.

destinations/  hand-labeled 50-domain destination cases
esld/          fqdn -> esld pairs computed by the publicsuffixlist package (ICANN section)
responses/     200 recorded classifier response lines, 30 of them malformed
"""

import json
import pathlib

from publicsuffixlist import PublicSuffixList

HERE = pathlib.Path(__file__).resolve().parent
ROOT = HERE.parent.parent


def write(path, text):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


# --- destinations ---------------------------------------------------------

PROFILES = [
    {"name": "Roblox", "first_party_eslds": ["roblox.com", "rbxcdn.com"], "owner_orgs": ["Roblox Corporation"]},
    {"name": "Minecraft", "first_party_eslds": ["minecraft.net"], "owner_orgs": ["Microsoft Corporation"]},
    {"name": "TikTok", "first_party_eslds": ["tiktok.com"], "owner_orgs": ["ByteDance Ltd."]},
    {"name": "Duolingo", "first_party_eslds": ["duolingo.com"], "owner_orgs": ["Duolingo, Inc."]},
    {"name": "YouTube", "first_party_eslds": ["youtube.com"], "owner_orgs": ["Google LLC"]},
]

ENTITY_MAP = {
    "Google LLC": {"displayName": "Google", "properties": [
        "doubleclick.net", "google-analytics.com", "googleapis.com", "googlesyndication.com",
        "googletagmanager.com", "youtube.com", "ytimg.com", "gstatic.com", "google.co.uk"]},
    "Amazon Technologies, Inc.": {"displayName": "Amazon", "properties": [
        "amazon-adsystem.com", "cloudfront.net", "amazonaws.com"]},
    "Microsoft Corporation": {"displayName": "Microsoft", "properties": [
        "clarity.ms", "microsoft.com", "minecraft.net", "xboxlive.com", "bing.com"]},
    "Roblox Corporation": {"displayName": "Roblox", "properties": ["roblox.com", "rbxcdn.com"]},
    "ByteDance Ltd.": {"displayName": "ByteDance", "properties": [
        "tiktok.com", "tiktokv.com", "byteoversea.com", "ibytedtos.com"]},
    "Duolingo, Inc.": {"displayName": "Duolingo", "properties": ["duolingo.com"]},
    "Meta Platforms, Inc.": {"displayName": "Meta", "properties": ["facebook.net", "facebook.com"]},
    "Vimeo.com, Inc.": {"displayName": "Vimeo", "properties": ["vimeocdn.com"]},
    "OpenAI": {"displayName": "OpenAI", "properties": ["openai.com"]},
    "Functional Software, Inc.": {"displayName": "Sentry", "properties": ["sentry.io"]},
    "The Trade Desk": {"displayName": "The Trade Desk", "properties": ["adsrvr.org"]},
}

BLOCKLIST = """\
# hosts entries (exact)
0.0.0.0 metrics.roblox.com
0.0.0.0 connect.facebook.net
0.0.0.0 log.byteoversea.com
0.0.0.0 mon.tiktokv.com
0.0.0.0 excess.duolingo.com
0.0.0.0 browser.events.data.microsoft.com
# domain rules (suffix)
doubleclick.net
google-analytics.com
googlesyndication.com
googletagmanager.com
amazon-adsystem.com
clarity.ms
adsrvr.org
app.link
branch.io
"""

# (service, url, expected label, expected esld)
DEST_CASES = [
    ("Roblox", "https://stats.g.doubleclick.net/j/collect", "third_ats", "doubleclick.net"),
    ("Roblox", "https://www.google-analytics.com/g/collect?v=2", "third_ats", "google-analytics.com"),
    ("Roblox", "https://aax.amazon-adsystem.com/e/dtb/bid", "third_ats", "amazon-adsystem.com"),
    ("Roblox", "https://metrics.roblox.com/v1/events", "first_ats", "roblox.com"),
    ("Roblox", "https://www.roblox.com/home", "first", "roblox.com"),
    ("Roblox", "https://tr.rbxcdn.com/asset", "first", "rbxcdn.com"),
    ("Roblox", "https://d1x2y3.cloudfront.net/lib.js", "third", "cloudfront.net"),
    ("Roblox", "https://fonts.googleapis.com/css", "third", "googleapis.com"),
    ("Roblox", "https://connect.facebook.net/en_US/fbevents.js", "third_ats", "facebook.net"),
    ("Roblox", "https://www.facebook.com/tr", "third", "facebook.com"),
    ("Roblox", "https://o1.ingest.sentry.io/api/1/envelope/", "third", "sentry.io"),
    ("Roblox", "https://match.adsrvr.org/track/cmf", "third_ats", "adsrvr.org"),
    ("Minecraft", "https://www.clarity.ms/tag/abc", "first_ats", "clarity.ms"),
    ("Minecraft", "https://c.clarity.ms/c.gif", "first_ats", "clarity.ms"),
    ("Minecraft", "https://browser.events.data.microsoft.com/OneCollector/1.0/", "first_ats", "microsoft.com"),
    ("Minecraft", "https://www.microsoft.com/en-us", "first", "microsoft.com"),
    ("Minecraft", "https://www.minecraft.net/en-us/login", "first", "minecraft.net"),
    ("Minecraft", "https://user.auth.xboxlive.com/user/authenticate", "first", "xboxlive.com"),
    ("Minecraft", "https://www.bing.com/search", "first", "bing.com"),
    ("Minecraft", "https://securepubads.g.doubleclick.net/gampad/ads", "third_ats", "doubleclick.net"),
    ("Minecraft", "https://www.googletagmanager.com/gtag/js", "third_ats", "googletagmanager.com"),
    ("Minecraft", "https://s3.amazonaws.com/bucket/obj", "third", "amazonaws.com"),
    ("Minecraft", "https://d9.cloudfront.net/x", "third", "cloudfront.net"),
    ("Minecraft", "https://metrics.roblox.com/v1/events", "third_ats", "roblox.com"),
    ("TikTok", "https://www.tiktok.com/foryou", "first", "tiktok.com"),
    ("TikTok", "https://mon.tiktokv.com/monitor_browser/collect", "first_ats", "tiktokv.com"),
    ("TikTok", "https://api16.tiktokv.com/aweme/v1/feed", "first", "tiktokv.com"),
    ("TikTok", "https://log.byteoversea.com/service/2/app_log/", "first_ats", "byteoversea.com"),
    ("TikTok", "https://p16.ibytedtos.com/img", "first", "ibytedtos.com"),
    ("TikTok", "https://pagead2.googlesyndication.com/pagead/js", "third_ats", "googlesyndication.com"),
    ("TikTok", "https://tiktok.app.link/abc", "third_ats", "app.link"),
    ("TikTok", "https://api2.branch.io/v1/open", "third_ats", "branch.io"),
    ("TikTok", "https://www.googleapis.com/identitytoolkit/v3", "third", "googleapis.com"),
    ("TikTok", "https://f.vimeocdn.com/p/3.0/js", "third", "vimeocdn.com"),
    ("Duolingo", "https://www.duolingo.com/2017-06-30/users", "first", "duolingo.com"),
    ("Duolingo", "https://excess.duolingo.com/batch", "first_ats", "duolingo.com"),
    ("Duolingo", "https://api.openai.com/v1/chat/completions", "third", "openai.com"),
    ("Duolingo", "https://region1.google-analytics.com/g/collect", "third_ats", "google-analytics.com"),
    ("Duolingo", "https://d35aaqx5ub95lt.cloudfront.net/images/x.svg", "third", "cloudfront.net"),
    ("Duolingo", "https://firebaselogging-pa.googleapis.com/v1/firelog", "third", "googleapis.com"),
    ("Duolingo", "https://www.google.co.uk/search?q=x", "third", "google.co.uk"),
    ("Duolingo", "https://c.amazon-adsystem.com/aax2/apstag.js", "third_ats", "amazon-adsystem.com"),
    ("Duolingo", "https://unknown-tracker-free.example.com/p", "third", "example.com"),
    ("YouTube", "https://www.youtube.com/watch?v=1", "first", "youtube.com"),
    ("YouTube", "https://i.ytimg.com/vi/1/default.jpg", "first", "ytimg.com"),
    ("YouTube", "https://static.doubleclick.net/instream/ad_status.js", "first_ats", "doubleclick.net"),
    ("YouTube", "https://www.google-analytics.com/analytics.js", "first_ats", "google-analytics.com"),
    ("YouTube", "https://fonts.gstatic.com/s/roboto", "first", "gstatic.com"),
    ("YouTube", "https://aax.amazon-adsystem.com/e/dtb/bid", "third_ats", "amazon-adsystem.com"),
    ("YouTube", "https://d1.cloudfront.net/y", "third", "cloudfront.net"),
]


def make_destinations():
    assert len(DEST_CASES) == 50, len(DEST_CASES)
    out = HERE / "destinations"
    write(out / "profiles.json", json.dumps(PROFILES, indent=1) + "\n")
    write(out / "entity_map.json", json.dumps(ENTITY_MAP, indent=1) + "\n")
    write(out / "blocklist.txt", BLOCKLIST)
    cases = [{"service": s, "url": u, "label": l, "esld": e} for s, u, l, e in DEST_CASES]
    write(out / "cases.json", json.dumps(cases, indent=1) + "\n")


# --- esld pairs -----------------------------------------------------------

FQDNS = [
    "www.example.com", "example.com", "a.b.c.example.com", "shop.example.co.uk", "example.co.uk",
    "deep.sub.bbc.co.uk", "news.bbc.co.uk", "www.amazon.co.jp", "maps.google.com.au", "abc.net.au",
    "www.gov.uk", "service.gov.uk", "x.y.service.gov.uk", "www.ox.ac.uk", "mail.cam.ac.uk",
    "www.tokyo.ac.jp", "city.kawasaki.jp", "www.city.kawasaki.jp", "a.b.kawasaki.jp", "x.a.b.kawasaki.jp",
    "www.ck", "foo.bar.ck", "a.foo.bar.ck", "city.kobe.jp", "shop.x.kobe.jp",
    "foo.github.io", "a.b.github.io", "myblog.blogspot.com", "x.herokuapp.com", "bucket.s3.amazonaws.com",
    "d1x2.cloudfront.net", "api.roblox.com", "metrics.roblox.com", "www.clarity.ms", "c.clarity.ms",
    "stats.g.doubleclick.net", "www.google-analytics.com", "aax.amazon-adsystem.com", "fonts.googleapis.com",
    "WWW.EXAMPLE.ORG", "example.org.", "www.example.org", "sub.domain.co.nz", "www.bbc.co.nz",
    "shop.com.br", "www.loja.com.br", "x.y.z.com.br", "a.b.nom.br", "www.a.b.nom.br",
    "www.gouv.fr", "service-public.fr", "www.service-public.fr", "www.spiegel.de", "www.bund.de",
    "mail.yandex.ru", "www.msk.ru", "www.example.in", "www.iitb.ac.in", "site.gov.in",
    "www.example.cn", "www.sina.com.cn", "a.b.edu.cn", "www.example.com.cn", "www.baidu.com",
    "www.un.org", "www.example.edu", "cs.stanford.edu", "www.mit.edu", "x.y.mit.edu",
    "www.example.io", "api.example.dev", "www.example.app", "my.site.xyz", "a.b.example.tech",
    "www.example.co", "shop.example.co", "www.example.me", "example.tv", "cdn.example.tv",
    "www.example.ca", "www.gc.ca", "www.example.qc.ca", "www.example.on.ca", "www.example.com.mx",
    "www.example.gob.mx", "www.example.es", "www.example.com.es", "www.example.it", "www.example.gov.it",
    "www.example.nl", "www.example.be", "www.example.ch", "www.example.at", "www.example.co.at",
    "www.example.se", "www.example.no", "www.example.dk", "www.example.fi", "www.example.pl",
    "www.example.com.pl", "a.b.c.d.e.example.co.za", "www.example.org.za",
]


def make_esld():
    psl = PublicSuffixList(open(ROOT / "data" / "public_suffix_list.dat", "rb"), only_icann=True)
    rows = []
    for fqdn in FQDNS:
        name = fqdn.lower().rstrip(".")
        esld = psl.privatesuffix(name)
        if esld is None:
            continue
        rows.append((fqdn, esld))
    rows = rows[:100]
    assert len(rows) == 100, len(rows)
    write(HERE / "esld" / "pairs.csv", "fqdn,esld\n" + "".join(f"{f},{e}\n" for f, e in rows))


# --- classifier responses -------------------------------------------------

GOOD = [
    ("email", "Contact Information"), ("user_id", "Aliases"), ("password", "Login Information"),
    ("deviceModel", "Device Information"), ("ip", "Reasonably Linkable Personal Identifiers"),
    ("first_name", "Name"), ("advertising_id", "Device Software Identifiers"),
    ("phoneNumber", "Contact Information"), ("birthdate", "Age"), ("lat", "Precise Geolocation"),
]

# Each entry replaces the whole line for its key; every one must fail to parse.
MALFORMED = [
    "{key} // Contact Information",
    "{key} // Contact Information // 0.9",
    "{key} // Not A Category // 0.9 // made up",
    "{key} // Contact Informations // 0.9 // typo",
    "{key} // Contact Information // high // words",
    "{key} // Contact Information // 1.7 // above range",
    "{key} // Contact Information // -0.2 // below range",
    "{key} // Contact Information //  // empty score",
    "{key} //  // 0.8 // empty category",
    "{key} // Contact Information // nan // not a number",
    "{key} // Contact Information // inf // infinite",
    "{key} // Contact Information // 0.9x // trailing junk",
    "{key} - Contact Information - 0.9 - dashes",
    "{key}: Contact Information, 0.9",
    "{key} | Contact Information | 0.9 | pipes",
    "{key}",
    "{key} // 0.9 // Contact Information // swapped",
    "{key} // Contact Information // 90% // percent",
    "{key} // Contact Information // 1e3 // exponent",
    "{key} // Contact Information // 0,9 // comma decimal",
    "{key} /// Contact Information /// 0.9",
    "{key} // Contact Information // . // dot",
    "{key} // Contact Information // -- // dashes",
    "{key} // ??? // ??? // ???",
    "{key} // Level3 // 0.5 // placeholder",
    "{key} // Identifiers // 0.9 // level-1 name",
    "{key} // Personal Identifiers // 0.9 // level-2 name",
    "{key} // Contact Information // 0.9.1 // version",
    "{key}//",
    "{key} // Contact Information // NaN // again",
]


def make_responses():
    assert len(MALFORMED) == 30
    records = []
    malformed_at = set(range(3, 200, 200 // 30))  # 30 spread-out line positions
    malformed_at = set(sorted(malformed_at)[:30])
    assert len(malformed_at) == 30
    line_no = 0
    m = 0
    for b in range(20):
        batch = [f"{key}_{b}_{i}" for i, (key, _) in enumerate(GOOD)]
        lines = []
        for i, (key, label) in enumerate(GOOD):
            item = batch[i]
            if line_no in malformed_at:
                lines.append(MALFORMED[m].format(key=item))
                m += 1
            else:
                conf = 0.5 + ((b * 7 + i * 3) % 50) / 100
                lines.append(f"{item} // {label} // {conf:.2f} // {key} field")
            line_no += 1
        records.append({"temperature": 0.0, "batch": batch, "response": "\n".join(lines)})
    assert m == 30
    write(HERE / "responses" / "responses.jsonl",
          "".join(json.dumps(r) + "\n" for r in records))


if __name__ == "__main__":
    make_destinations()
    make_esld()
    make_responses()
