"""Writes the synthetic bilingual fixture corpus used by the tests and docs."""

import hashlib
import os
import random

ROOT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "corpus")

COMMON = (
    "și de la în cu pentru care este au a fost din pe mai un o că se nu după anul acest această "
    "foarte oameni timp zi ani țara lucru important spus potrivit declarat situația ultimele luni "
    "multe până acum precum toate astăzi mâine ieri noua vechea mare mic bine greu nou"
).split()

MARKERS = {
    "MD": (
        "chișinău raionul bălți găgăuzia transnistria moldovenești comrat orhei cahul ungheni soroca "
        "nistrului codrii vinăria primăria $ne$ sovietică rusă basarabia molda"
    ).split(),
    "RO": (
        "bucurești județul cluj iași timișoara brașov constanța carpați anaf românești dunărea "
        "ardeal oltenia banat comuna bruxelles ue ploiești sibiu"
    ).split(),
}

TOPICS = {
    "culture": "festivalul teatrul filmul expoziția muzica cartea scriitorul concertul spectacolul artiștii",
    "finance": "banca dobânda inflația bugetul investițiile bursa creditul prețurile economia taxele",
    "politics": "alegerile partidul votul premierul opoziția coaliția parlamentul campania președintele legea",
    "science": "cercetătorii studiul universitatea laboratorul descoperirea spațiul medicii vaccinul planeta experimentul",
    "sports": "meciul echipa golul antrenorul campionatul fotbalul turneul jucătorii victoria stadionul",
    "tech": "aplicația telefonul internetul compania programul rețeaua datele algoritmul dispozitivul serverul",
}
TOPIC_NAMES = sorted(TOPICS)

rng = random.Random(2018)


def sentence(dialect, topic, marker_rate):
    words = []
    for _ in range(rng.randint(7, 13)):
        r = rng.random()
        if r < marker_rate:
            side = dialect if rng.random() < 0.75 else ("RO" if dialect == "MD" else "MD")
            words.append(rng.choice(MARKERS[side]))
        elif topic and r < marker_rate + 0.25:
            words.append(rng.choice(TOPICS[topic].split()))
        else:
            words.append(rng.choice(COMMON))
    words[0] = words[0].capitalize()
    return " ".join(words) + rng.choice([".", ".", ".", "!", "?"])


def article(dialect, topic):
    return " ".join(sentence(dialect, topic, 0.22) for _ in range(rng.randint(3, 5)))


def write(source, split, rows):
    d = os.path.join(ROOT, source)
    os.makedirs(d, exist_ok=True)
    with open(os.path.join(d, f"{split}.tsv"), "w", encoding="utf-8") as f:
        for row in rows:
            f.write("\t".join(row) + "\n")
    return len(rows)


def news(prefix, n):
    rows = []
    for i in range(n):
        dialect = "MD" if i % 2 == 0 else "RO"
        topic = TOPIC_NAMES[(i // 2) % len(TOPIC_NAMES)]
        rows.append((f"{prefix}-{i:03d}", dialect, topic, "news", article(dialect, topic)))
    return rows


def tweets(prefix, n):
    rows = []
    for i in range(n):
        dialect = "MD" if i % 2 == 0 else "RO"
        rows.append((f"{prefix}-{i:03d}", dialect, "-", "tweet", sentence(dialect, None, 0.3)))
    return rows


sizes = {s: write("moroco", s, news(p, n)) for s, p, n in [("train", "tr", 36), ("validation", "va", 8), ("test", "te", 8)]}
with open(os.path.join(ROOT, "moroco", "manifest.tsv"), "w", encoding="utf-8") as f:
    for s in ("train", "validation", "test"):
        f.write(f"{s}\t{sizes[s]}\n")
tw = {s: write("moroco-tweets", s, tweets(p, 4)) for s, p in [("validation", "twva"), ("test", "twte")]}
with open(os.path.join(ROOT, "moroco-tweets", "manifest.tsv"), "w", encoding="utf-8") as f:
    for s in ("validation", "test"):
        f.write(f"{s}\t{tw[s]}\n")

# Predictions of a strong external model on validation and test, in the
# interchange format, for exercising prediction import.
lines = ["sample_id\tmodel_id\thard_label\tMD\tRO\n"]
for prefix in ("va", "te"):
    for i in range(8):
        gold = i % 2
        p = round(rng.uniform(0.8, 0.95), 4)
        probs = (p, round(1 - p, 4)) if gold == 0 else (round(1 - p, 4), p)
        lines.append(f"{prefix}-{i:03d}\tbert\t{gold}\t{probs[0]}\t{probs[1]}\n")
body = "".join(lines)
digest = hashlib.sha256(body.encode("utf-8")).hexdigest()
os.makedirs(os.path.join(os.path.dirname(ROOT), "external"), exist_ok=True)
with open(os.path.join(os.path.dirname(ROOT), "external", "bert-dialect.tsv"), "w", encoding="utf-8") as f:
    f.write(body + f"#checksum\t{digest}\n")
