#!/usr/bin/env python3
"""Writes the bundled synthetic data set.

  data/history/delisted_cases.jsonl  seed cases for the index and the tree builder
  data/corpus/apps.jsonl             120 apps: 20 planted risky, 100 benign
  data/corpus/labels.jsonl           planted categories per app
  data/fixtures/*.json               single-app fixtures (case study, near clone, benign)

Output is a pure function of --seed.
"""

import argparse
import json
import random
from collections import Counter
from pathlib import Path

DAY = 86400
WINDOW_START = 1733011200  # 2024-12-01T00:00:00Z
WINDOW_END = 1735603200  # 2024-12-31T00:00:00Z

UF, RM, EP, DL, AV = "UserFeedback", "RuntimeMonitor", "ExecutionPatterns", "DynamicLoad", "AntiVirusEngine"
SA, SM, UP, DC, AD = "StaticAnalysis", "StoreMetadata", "UsagePatterns", "Discrepancy", "AppDistribution"
BL, SS, AS, NF, UFQ = "Blacklist", "Screenshot", "AppSimilarity", "NetworkFeature", "UpdateFrequency"

# Phrases for history snippet text, close to what the agents write.
PHRASES = {
    "advertising-related": "User feedback (advertising-related): full of ads, pop-ups cover the screen every minute",
    "payment-fraud": "User feedback (payment-fraud): cannot withdraw the game rewards, wallet payment never arrives",
    "privacy": "User feedback (privacy): it reads my contacts and keeps tracking my location",
    "content-anomaly": "User feedback (content-anomaly): gambling and explicit content shown to kids",
    "functional-issue": "User feedback (functional-issue): fake copy of the real app, crashes on start",
    "ad-pop-ups": "Average pop-up count was {n}, above the default baseline of 5.",
    "screen-off-usage": "Average screen-off usage (s) was {n}, above the default baseline of 3600.",
    "background-wakeups": "Daily background wake-ups was {n}, above the default baseline of 50.",
    "ad-sdk-implant": "The engine reports {n} ad SDK implants, including com.by***ance.pa**le.sdk, com.k**d.sdk.",
    "dynamic-code-loading": "Dynamic code loads per day was {n}, above the default baseline of 3.",
    "anomalous-usage-periods": "Share of sessions between 0:00 and 5:00 was 0.{n}, above the default baseline of 0.3.",
    "rank-fluctuation": "Download rank moved from {n} to 12, outside the 95% interval of the previous 7 samples.",
    "rating-fluctuation": "Store rating moved from 4.{n} to 2.1, outside the 95% interval of the previous 7 samples.",
    "blacklisted-developer": "Blacklist hits was {n}, above the default baseline of 0.",
    "overlay-permission": "Pre-computed requested_permissions include flagged labels: system_alert_window.",
    "gambling-content": "Pre-computed screenshot_labels include flagged labels: gambling, casino.",
    "counterfeit-similarity": "Icon similarity to a popular app was 0.9{n}, above the default baseline of 0.9.",
    "suspicious-domains": "Suspicious domains contacted was {n}, above the default baseline of 0.",
    "distributes-delisted-app": "Distributes C10***{n}, C11***363, of which C11***363 is a previously removed app.",
    "category-mismatch": "Declared as \"Tools\" but description and feedback discuss game, withdraw, wallet.",
    "malicious-callee": "Launched {n} packages unrelated to its own namespace: com.asdg.xwdd, com.aaqe.jymtf.",
    "anomalous-launches+malicious-callee": (
        "Matched the morphing mode: launches changed from 2{n}0 to 3084 and the app launched 5 unrelated "
        "packages: com.asdg.xwdd, com.aaqe.jymtf."),
}

# Per category: one entry per case, each a map group -> indicators carried by that group.
MORPH = ["anomalous-launches", "malicious-callee"]
HISTORY = {
    "AdPopups": [
        {UF: ["advertising-related"], RM: ["ad-pop-ups"], AV: ["ad-sdk-implant"]},
        {UF: ["advertising-related"], EP: ["malicious-callee"], DL: ["dynamic-code-loading"], RM: ["ad-pop-ups"],
         AV: ["ad-sdk-implant"]},
        {UF: ["advertising-related"], EP: ["malicious-callee"], DL: ["dynamic-code-loading"], RM: ["ad-pop-ups"],
         AV: ["ad-sdk-implant"]},
        {UF: ["advertising-related"], EP: ["malicious-callee"], DL: ["dynamic-code-loading"]},
        {UF: ["advertising-related"], EP: ["malicious-callee"], DL: ["dynamic-code-loading"]},
        {UF: ["advertising-related"], EP: ["malicious-callee"]},
        {UF: ["advertising-related"], EP: ["malicious-callee"], DL: ["dynamic-code-loading"]},
        {UF: ["advertising-related"], EP: ["malicious-callee"]},
    ],
    "UnexpectedPopups": [
        {RM: ["ad-pop-ups"], SA: ["overlay-permission"], EP: ["malicious-callee"]},
        {RM: ["ad-pop-ups"], SA: ["overlay-permission"], EP: ["malicious-callee"]},
        {RM: ["ad-pop-ups"], SA: ["overlay-permission"], EP: ["malicious-callee"]},
        {RM: ["ad-pop-ups"], SA: ["overlay-permission"]},
        {RM: ["ad-pop-ups"], SA: ["overlay-permission"]},
        {RM: ["ad-pop-ups"]},
    ],
    "Retention": [
        {RM: ["screen-off-usage"], UP: ["anomalous-usage-periods"], SM: ["rank-fluctuation"]},
        {RM: ["screen-off-usage"], UP: ["anomalous-usage-periods"], DL: ["dynamic-code-loading"]},
        {RM: ["screen-off-usage"], UP: ["anomalous-usage-periods"], DL: ["dynamic-code-loading"],
         SM: ["rank-fluctuation"]},
        {RM: ["background-wakeups"], DL: ["dynamic-code-loading"], SM: ["rank-fluctuation"]},
        {RM: ["background-wakeups"], DL: ["dynamic-code-loading"], SM: ["rank-fluctuation"]},
        {RM: ["background-wakeups"], DL: ["dynamic-code-loading"]},
        {RM: ["screen-off-usage"]},
    ],
    "AppMorphing": [
        {UF: ["payment-fraud"], EP: MORPH, DC: ["category-mismatch"], AD: ["distributes-delisted-app"]},  # Move a brick
        {UF: ["payment-fraud"], EP: MORPH, DC: ["category-mismatch"], AD: ["distributes-delisted-app"]},
        {UF: ["payment-fraud"], EP: MORPH, DC: ["category-mismatch"], AD: ["distributes-delisted-app"]},
        {UF: ["payment-fraud"], EP: MORPH, DC: ["category-mismatch"], AD: ["distributes-delisted-app"]},
        {UF: ["payment-fraud"], EP: MORPH, DC: ["category-mismatch"]},
        {UF: ["payment-fraud"], EP: MORPH},
        {UF: ["payment-fraud"]},
    ],
    "IllegalFeatures": [
        {UF: ["privacy"], SM: ["rank-fluctuation"], BL: ["blacklisted-developer"]},
        {UF: ["privacy"], SM: ["rank-fluctuation"], BL: ["blacklisted-developer"]},
        {UF: ["privacy"], SM: ["rank-fluctuation"], BL: ["blacklisted-developer"]},
        {UF: ["privacy"], SM: ["rank-fluctuation"]},
        {UF: ["privacy"]},
        {UF: ["privacy"]},
    ],
    "ContentRisk": [
        {UF: ["content-anomaly"], SS: ["gambling-content"], SM: ["rating-fluctuation"]},
        {UF: ["content-anomaly"], SS: ["gambling-content"], SM: ["rating-fluctuation"]},
        {UF: ["content-anomaly"], SS: ["gambling-content"], SM: ["rating-fluctuation"]},
        {UF: ["content-anomaly"], SS: ["gambling-content"]},
        {UF: ["content-anomaly"], SS: ["gambling-content"]},
        {UF: ["content-anomaly"]},
    ],
    "AppCounterfeiting": [
        {AS: ["counterfeit-similarity"], UF: ["functional-issue"], SM: ["rating-fluctuation"]},
        {AS: ["counterfeit-similarity"], UF: ["functional-issue"], SM: ["rating-fluctuation"]},
        {AS: ["counterfeit-similarity"], UF: ["functional-issue"], SM: ["rating-fluctuation"]},
        {AS: ["counterfeit-similarity"], UF: ["functional-issue"]},
        {AS: ["counterfeit-similarity"], UF: ["functional-issue"]},
        {AS: ["counterfeit-similarity"]},
    ],
    "Malware": [
        {RM: ["background-wakeups"], AD: ["distributes-delisted-app"], NF: ["suspicious-domains"]},
        {RM: ["background-wakeups"], AD: ["distributes-delisted-app"], NF: ["suspicious-domains"]},
        {RM: ["background-wakeups"], AD: ["distributes-delisted-app"], NF: ["suspicious-domains"]},
        {RM: ["background-wakeups"], AD: ["distributes-delisted-app"]},
        {RM: ["background-wakeups"]},
        {RM: ["background-wakeups"]},
    ],
}

# Top three groups per category, strictly ordered by weight.
EXPECTED_TOP3 = {
    "AdPopups": [UF, EP, DL],
    "UnexpectedPopups": [RM, SA, EP],
    "Retention": [RM, DL, SM],
    "AppMorphing": [UF, EP, DC],
    "IllegalFeatures": [UF, SM, BL],
    "ContentRisk": [UF, SS, SM],
    "AppCounterfeiting": [AS, UF, SM],
    "Malware": [RM, AD, NF],
}

NAMED_CASES = {
    ("AppMorphing", 0): ("C11***339", "Move a brick"),
    ("AdPopups", 0): ("C11***351", "Thousand Miles of Journey"),
}

CATEGORIES = ["Tools", "Games", "Music", "Education", "Shopping", "Social", "Finance", "Photography"]
DESCRIPTIONS = {
    "Tools": "A compact utility for cleaning storage and managing files.",
    "Games": "A relaxing puzzle game with hundreds of levels.",
    "Music": "Stream and organize your favourite songs and playlists.",
    "Education": "Daily vocabulary lessons and quizzes for students.",
    "Shopping": "Browse deals and pay with your wallet at checkout.",
    "Social": "Chat with friends and share photos in groups.",
    "Finance": "Track expenses, budgets and loan repayments.",
    "Photography": "Edit photos with filters, frames and stickers.",
}
POSITIVE = [
    "Great app, very useful",
    "Love the clean design",
    "Works smooth on my phone",
    "Nice and helpful",
    "Excellent, does what it says",
    "Good value",
]
FUNCTIONAL = ["Keeps crashing after the update", "Freezes on the login screen", "The export button is broken"]
AD_COMMENTS = ["Full of ads, cannot use it", "Pop-ups every minute", "An advert covers the whole screen"]
PRIVACY = ["It is spying on my contacts", "Keeps tracking my location for no reason"]
CONTENT = ["Shows gambling ads to kids", "Explicit pictures in the feed", "Inappropriate gambling content"]
FAKE = ["Fake copy of the real app", "Copycat, crashes on start"]


def fv(dim, kind, value, source):
    return {"dimension": dim, "kind": kind, "value": value, "source": source}


def num(dim, value, source):
    return fv(dim, "structured_numeric", round(float(value), 4), source)


def text(dim, value, source):
    return fv(dim, "unstructured_text", value, source)


def series(dim, values, source, start=WINDOW_START):
    return fv(dim, "structured_series", [[start + i * DAY, round(float(v), 4)] for i, v in enumerate(values)],
              source)


def flat_series(rng, center, spread, n=8):
    """n points whose last value equals the trailing mean, so no fluctuation is flagged."""
    head = [center + rng.uniform(-spread, spread) for _ in range(n - 1)]
    head = [round(v, 2) for v in head]
    return head + [round(sum(head) / len(head), 4)]


def jump_series(rng, center, spread, last, n=8):
    head = [round(center + rng.uniform(-spread, spread), 2) for _ in range(n - 1)]
    return head + [last]


class AppBuilder:
    def __init__(self, rng, app_id, name, category, developer=None):
        self.rng = rng
        self.app = {
            "app_id": app_id,
            "app_name": name,
            "developer": developer or f"{name.split()[0]} Software Ltd.",
            "declared_category": category,
            "collected_at": {"start": WINDOW_START, "end": WINDOW_END},
            "features": {},
        }
        slug = "".join(c for c in name.lower() if c.isalnum())[:12] or "app"
        self.package = f"com.{slug}.{category.lower()}"

    def put(self, group, value):
        vals = self.app["features"].setdefault(group, [])
        vals[:] = [v for v in vals if v["dimension"] != value["dimension"]]
        vals.append(value)
        return self

    def baseline(self):
        """Unremarkable values for every group."""
        r = self.rng
        cat = self.app["declared_category"]
        self.put(RM, num("popup_count", r.uniform(0.5, 4.0), "runtime_monitor"))
        self.put(RM, num("screen_off_usage_seconds", r.uniform(200, 2500), "runtime_monitor"))
        self.put(RM, num("background_wakeups", r.randint(5, 40), "runtime_monitor"))
        self.put(UF, text("comments", "\n".join(r.sample(POSITIVE, 3)), "user_feedback"))
        self.put(DC, text("description", DESCRIPTIONS[cat], "store_listing"))
        self.put(EP, text("package_name", self.package, "execution_trace"))
        self.put(EP, text("launched_packages",
                          f"{self.package}.main, {self.package}.settings, com.android.browser", "execution_trace"))
        self.put(EP, series("launch_count", flat_series(r, r.uniform(300, 3000), 40), "execution_trace"))
        self.put(SM, series("download_rank", flat_series(r, r.uniform(100, 900), 15), "store_metadata"))
        self.put(SM, series("rating", flat_series(r, r.uniform(3.8, 4.7), 0.1), "store_metadata"))
        self.put(AV, num("ad_sdk_detections", 0, "av_engine"))
        self.put(AV, num("malware_detections", 0, "av_engine"))
        self.put(SA, text("requested_permissions", "internet, camera, storage", "static_analysis"))
        self.put(DL, num("dynamic_code_loads", r.randint(0, 2), "sandbox"))
        self.put(UP, num("night_session_ratio", r.uniform(0.02, 0.2), "usage_log"))
        self.put(AS, num("icon_similarity", r.uniform(0.1, 0.6), "icon_matcher"))
        self.put(NF, num("suspicious_domains", 0, "network_log"))
        self.put(BL, num("blacklist_hits", 0, "blacklist"))
        self.put(SS, text("screenshot_labels", "menu, settings, list", "screenshot_classifier"))
        self.put(UFQ, num("updates_last_30d", r.randint(0, 4), "store_metadata"))
        self.put(AD, text("distributed_apps", f"C20***{r.randint(100, 999)}", "distribution_graph"))
        return self

    # Signals --------------------------------------------------------------
    def comments(self, lines, keep_positive=1):
        lines = list(lines) + self.rng.sample(POSITIVE, keep_positive)
        return self.put(UF, text("comments", "\n".join(lines), "user_feedback"))

    def popups(self, n):
        return self.put(RM, num("popup_count", n, "runtime_monitor"))

    def screen_off(self, n):
        return self.put(RM, num("screen_off_usage_seconds", n, "runtime_monitor"))

    def wakeups(self, n):
        return self.put(RM, num("background_wakeups", n, "runtime_monitor"))

    def ad_sdks(self, n, sdks):
        self.put(AV, num("ad_sdk_detections", n, "av_engine"))
        return self.put(AV, text("detected_sdks", ", ".join(sdks), "av_engine"))

    def dynamic_loads(self, n):
        return self.put(DL, num("dynamic_code_loads", n, "sandbox"))

    def unrelated_launches(self, pkgs):
        return self.put(EP, text("launched_packages", ", ".join([f"{self.package}.main"] + pkgs), "execution_trace"))

    def launch_jump(self, before, after):
        return self.put(EP, series("launch_count", jump_series(self.rng, before, 30, after)[:-2] + [before, after],
                                   "execution_trace"))

    def description(self, s):
        return self.put(DC, text("description", s, "store_listing"))

    def overlay(self):
        return self.put(SA, text("requested_permissions", "internet, system_alert_window, storage", "static_analysis"))

    def night(self, ratio):
        return self.put(UP, num("night_session_ratio", ratio, "usage_log"))

    def rank_jump(self):
        return self.put(SM, series("download_rank", jump_series(self.rng, 500, 10, 40), "store_metadata"))

    def blacklist(self, n):
        return self.put(BL, num("blacklist_hits", n, "blacklist"))

    def screenshots(self, labels):
        return self.put(SS, text("screenshot_labels", labels, "screenshot_classifier"))

    def icon(self, s):
        return self.put(AS, num("icon_similarity", s, "icon_matcher"))

    def domains(self, n):
        return self.put(NF, num("suspicious_domains", n, "network_log"))

    def distributes(self, ids):
        return self.put(AD, text("distributed_apps", ", ".join(ids), "distribution_graph"))

    def updates(self, n):
        return self.put(UFQ, num("updates_last_30d", n, "store_metadata"))

    def build(self):
        self.app["features"] = {g: sorted(v, key=lambda x: x["dimension"]) for g, v in
                                sorted(self.app["features"].items())}
        return self.app


# ---------------------------------------------------------------------------
# History
# ---------------------------------------------------------------------------

def history_cases(rng):
    cases = []
    serial = 200
    for category, entries in HISTORY.items():
        for i, groups in enumerate(entries):
            app_id, name = NAMED_CASES.get((category, i), (None, None))
            if app_id is None:
                serial += 1
                app_id, name = f"C11***{serial}", f"{category} case {i + 1}"
            indicators = sorted({ind for inds in groups.values() for ind in inds})
            parts = []
            for g in sorted(groups):
                inds = groups[g]
                key = "+".join(inds) if "+".join(inds) in PHRASES else inds[0]
                parts.append(PHRASES[key].format(n=rng.randint(11, 99)))
                for extra in inds:
                    if extra != inds[0] and key != "+".join(inds):
                        parts.append(PHRASES[extra].format(n=rng.randint(11, 99)))
            cases.append({
                "app_id": app_id,
                "app_name": name,
                "risk_category": category,
                "indicators": indicators,
                "groups": sorted(groups),
                "snippet_text": "\n".join(parts),
                "delisted_at": WINDOW_START - rng.randint(30, 400) * DAY,
                "origin": "seed_corpus",
            })
    check_history(cases)
    return cases


def check_history(cases):
    by_cat = {}
    for c in cases:
        by_cat.setdefault(c["risk_category"], []).append(c)
    for cat, cs in by_cat.items():
        counts = Counter(g for c in cs for g in c["groups"])
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        top = [g for g, _ in ranked[:3]]
        assert top == EXPECTED_TOP3[cat], (cat, ranked)
        weights = [n for _, n in ranked[:4]]
        assert all(a > b for a, b in zip(weights, weights[1:])), (cat, ranked)
        assert all(n / len(cs) >= 0.05 for _, n in ranked), (cat, ranked)
    ids = [c["app_id"] for c in cases]
    assert len(ids) == len(set(ids))


# ---------------------------------------------------------------------------
# Corpus
# ---------------------------------------------------------------------------

AD_SDKS = ["com.by***ance.pa**le.sdk", "com.b**du.mo**ds.sdk", "com.k**d.sdk", "com.mi**gral.ads"]
UNRELATED = ["com.asdg.xwdd", "com.aaqe.jymtf", "com.qwpz.lkjh", "com.zzop.vbnm", "com.hhtr.pqrs"]


def planted_apps(rng, history_ids):
    apps, labels = [], []
    n = 0

    def new(category_label, name, declared):
        nonlocal n
        n += 1
        b = AppBuilder(rng, f"P{n:03d}", name, declared).baseline()
        labels.append({"app_id": b.app["app_id"], "labels": [category_label]})
        return b

    for i in range(2):
        b = new("AdPopups", f"Flash Cleaner {i + 1}", "Tools")
        b.comments(rng.sample(AD_COMMENTS, 2)).popups(rng.uniform(14, 22)).ad_sdks(3 + i, AD_SDKS[:3 + i])
        apps.append(b.build())
    b = new("AdPopups", "Daily Wallpaper", "Photography")
    b.comments(rng.sample(AD_COMMENTS, 2)).dynamic_loads(9)
    apps.append(b.build())

    for i in range(2):
        b = new("UnexpectedPopups", f"Battery Doctor {i + 1}", "Tools")
        b.popups(rng.uniform(12, 18)).overlay()
        apps.append(b.build())

    b = new("Retention", "Sleep Sounds", "Music")
    b.screen_off(rng.uniform(9000, 15000)).night(0.62)
    apps.append(b.build())
    b = new("Retention", "Step Counter", "Tools")
    b.wakeups(rng.randint(120, 180)).dynamic_loads(8)
    apps.append(b.build())

    for i in range(4):
        declared = ["Tools", "Music", "Education", "Photography"][i]
        b = new("AppMorphing", f"Handy Helper {i + 1}", declared)
        b.description("Simple helper. Play casino games, join the daily lottery and earn rewards.")
        b.unrelated_launches(rng.sample(UNRELATED, 3)).launch_jump(rng.uniform(800, 2000), rng.uniform(2600, 3400))
        if i < 2:
            b.distributes([f"C10***{rng.randint(100, 999)}", history_ids[i]])
        apps.append(b.build())

    for i in range(2):
        b = new("IllegalFeatures", f"Free VPN Proxy {i + 1}", "Tools")
        b.comments(PRIVACY).blacklist(2 + i)
        apps.append(b.build())

    for i in range(3):
        b = new("ContentRisk", f"Live Chat Room {i + 1}", "Social")
        b.comments(rng.sample(CONTENT, 2)).screenshots("chat, gambling, casino")
        apps.append(b.build())

    for i in range(2):
        b = new("AppCounterfeiting", f"WeChatt Lite {i + 1}", "Social")
        b.comments(FAKE).icon(0.95 + 0.02 * i)
        apps.append(b.build())

    for i in range(2):
        b = new("Malware", f"System Booster {i + 1}", "Tools")
        b.wakeups(rng.randint(130, 200)).domains(3 + i)
        apps.append(b.build())
    return apps, labels


def benign_apps(rng):
    """100 benign apps: clean, single-group decoys and a few two-group decoys."""
    plan = (["clean"] * 60
            + ["popups", "popups", "popups", "functional", "functional", "functional", "launch_unrelated",
               "launch_unrelated", "launch_jump", "launch_jump", "rank", "rank", "rank", "ad_sdk", "ad_sdk",
               "dynamic", "dynamic", "night", "night", "updates", "updates", "wakeups", "screen_off",
               "ad_comments", "overlay", "icon", "blacklist", "domains", "screens"]
            + ["functional+rank"] * 5 + ["popups+dynamic"] * 4 + ["ad_comments+dynamic"] * 1
            + ["privacy_comment"])
    assert len(plan) == 100, len(plan)
    apps, labels = [], []
    for i, kind in enumerate(plan):
        cat = CATEGORIES[i % len(CATEGORIES)]
        b = AppBuilder(rng, f"B{i + 1:03d}", f"{cat} App {i + 1}", cat).baseline()
        for part in kind.split("+"):
            if part == "popups":
                b.popups(rng.uniform(7, 11) if cat != "Games" else rng.uniform(13, 16))
            elif part == "functional":
                b.comments(rng.sample(FUNCTIONAL, 2))
            elif part == "launch_unrelated":
                b.unrelated_launches([rng.choice(UNRELATED)])
            elif part == "launch_jump":
                b.launch_jump(rng.uniform(500, 900), rng.uniform(2000, 2500))
            elif part == "rank":
                b.rank_jump()
            elif part == "ad_sdk":
                b.ad_sdks(1, AD_SDKS[:1])
            elif part == "dynamic":
                b.dynamic_loads(rng.randint(5, 7))
            elif part == "night":
                b.night(rng.uniform(0.35, 0.5))
            elif part == "updates":
                b.updates(rng.randint(10, 15))
            elif part == "wakeups":
                b.wakeups(rng.randint(60, 90))
            elif part == "screen_off":
                b.screen_off(rng.uniform(4000, 6000))
            elif part == "ad_comments":
                b.comments(rng.sample(AD_COMMENTS, 2), keep_positive=2)
            elif part == "privacy_comment":
                b.comments(PRIVACY[:1], keep_positive=2)
            elif part == "overlay":
                b.overlay()
            elif part == "icon":
                b.icon(0.93)
            elif part == "blacklist":
                b.blacklist(1)
            elif part == "domains":
                b.domains(1)
            elif part == "screens":
                b.screenshots("menu, casino, list")
            elif part != "clean":
                raise ValueError(part)
        apps.append(b.build())
        labels.append({"app_id": b.app["app_id"], "labels": []})
    return apps, labels


# ---------------------------------------------------------------------------
# Fixtures
# ---------------------------------------------------------------------------

def case_study_app(rng, app_id="C11***177", name="I Am Music Library", clone=False):
    b = AppBuilder(rng, app_id, name, "Tools", developer="Beijing *** Network Technology Co., Ltd.").baseline()
    b.package = "com.musiclib.tools" if not clone else "com.musiclib.pro"
    b.put(EP, text("package_name", b.package, "execution_trace"))
    b.put(UF, text("comments", "\n".join([
        "Too many ads, pop-ups every time I open it",
        "Ads pop up even when the screen is off",
        "The advert banner covers the whole player",
        "The game withdrawal never arrives",
        "Wallet payment for the task withdrawal failed",
    ]), "user_feedback"))
    b.description("A simple tool to organize the music library on your phone.")
    launches = [2400, 2455, 2380, 2510, 2430, 2490, 2469, 3084] if not clone else \
        [2300, 2350, 2290, 2410, 2330, 2390, 2370, 2990]
    b.put(EP, series("launch_count", launches, "execution_trace"))
    b.put(EP, text("launched_packages", ", ".join([
        f"{b.package}.player", "com.asdg.xwdd", "com.aaqe.jymtf", "com.qwpz.lkjh", "com.android.settings"]),
        "execution_trace"))
    b.popups(20.95 if not clone else 19.4).screen_off(20109 if not clone else 18750)
    b.distributes(["C10***531", "C10***401", "C11***363", "C11***535"])
    b.ad_sdks(3, AD_SDKS[:3])
    return b.build()


def benign_fixture(rng):
    return AppBuilder(rng, "C12***001", "Pocket Calculator", "Tools").baseline().build()


def write_jsonl(path, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as f:
        for r in rows:
            f.write(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "data"))
    ap.add_argument("--seed", type=int, default=20241201)
    args = ap.parse_args()
    out = Path(args.out)

    rng = random.Random(args.seed)
    history = history_cases(rng)
    write_jsonl(out / "history" / "delisted_cases.jsonl", history)

    planted, planted_labels = planted_apps(random.Random(args.seed + 1), [c["app_id"] for c in history])
    benign, benign_labels = benign_apps(random.Random(args.seed + 2))
    write_jsonl(out / "corpus" / "apps.jsonl", planted + benign)
    write_jsonl(out / "corpus" / "labels.jsonl", planted_labels + benign_labels)

    fx = out / "fixtures"
    fx.mkdir(parents=True, exist_ok=True)
    rng = random.Random(args.seed + 3)
    for name, app in [("case_study_app", case_study_app(rng)),
                      ("case_study_clone", case_study_app(rng, "C11***178", "I Am Music Library Pro", clone=True)),
                      ("benign_app", benign_fixture(rng))]:
        (fx / f"{name}.json").write_text(json.dumps(app, indent=2, ensure_ascii=False, sort_keys=True) + "\n")
    print(f"history={len(history)} apps={len(planted) + len(benign)} planted={len(planted)}")


if __name__ == "__main__":
    main()
