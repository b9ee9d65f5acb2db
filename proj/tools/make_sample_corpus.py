#!/usr/bin/env python3
"""Regenerates data/sample/: a 60-document dated Latin-like corpus with five
themes whose prevalence shifts over time, the lemma table entries it needs,
and synthetic EMB1 document/word embeddings.

Synthetic texts are sampled from themed inflected vocabularies; six documents
open with short public-domain passages (Twelve Tables, Cicero, Caesar,
Vergil, Augustine, the Vulgate).
"""
import random
import struct
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent / "data"
OUT = ROOT / "sample"

THEMES = {
    "republic": {
        "senatus": ["senatus", "senatum", "senatui", "senatu"],
        "populus": ["populus", "populum", "populi", "populo"],
        "consul": ["consul", "consulem", "consules", "consulis", "consulibus"],
        "res": ["res", "rem", "rei", "rebus"],
        "publicus": ["publica", "publicam", "publicae"],
        "lex": ["lex", "legem", "leges", "legibus", "legis"],
        "ciuis": ["ciuis", "ciues", "ciuium", "ciuibus"],
        "libertas": ["libertas", "libertatem", "libertatis"],
        "tribunus": ["tribunus", "tribuni", "tribunum"],
        "forum": ["forum", "foro", "fori"],
        "orator": ["orator", "oratorem", "oratores"],
        "patria": ["patria", "patriam", "patriae"],
        "romanus": ["romanus", "romani", "romanorum", "romanum"],
        "curia": ["curia", "curiam", "curiae"],
    },
    "war": {
        "bellum": ["bellum", "belli", "bella", "bellis"],
        "miles": ["miles", "milites", "militum", "militibus"],
        "castra": ["castra", "castris", "castrorum"],
        "legio": ["legio", "legionem", "legiones", "legionis"],
        "hostis": ["hostis", "hostes", "hostium", "hostibus"],
        "exercitus": ["exercitus", "exercitum"],
        "gladius": ["gladius", "gladio", "gladios"],
        "pugna": ["pugna", "pugnam"],
        "proelium": ["proelium", "proelio", "proelia"],
        "uictoria": ["uictoria", "uictoriam"],
        "dux": ["dux", "ducem", "duces", "ducis"],
        "oppidum": ["oppidum", "oppida", "oppido"],
        "fuga": ["fuga", "fugam"],
        "eques": ["equites", "equitum"],
    },
    "christian": {
        "deus": ["deus", "deum", "dei", "deo"],
        "christus": ["christus", "christi", "christo", "christum"],
        "spiritus": ["spiritus", "spiritum", "spiritu"],
        "ecclesia": ["ecclesia", "ecclesiam", "ecclesiae"],
        "fides": ["fides", "fidem", "fidei"],
        "peccatum": ["peccatum", "peccata", "peccatorum"],
        "gratia": ["gratia", "gratiam", "gratiae"],
        "sanctus": ["sanctus", "sancti", "sanctorum"],
        "apostolus": ["apostolus", "apostoli", "apostolorum"],
        "episcopus": ["episcopus", "episcopi", "episcopum"],
        "dominus": ["dominus", "domini", "domino", "dominum"],
        "anima": ["anima", "animam", "animae"],
        "caritas": ["caritas", "caritatem"],
        "homo": ["homo", "hominem", "homines", "hominum"],
    },
    "poetry": {
        "amor": ["amor", "amorem", "amoris"],
        "puella": ["puella", "puellam", "puellae"],
        "nox": ["nox", "noctem", "noctis", "nocte"],
        "mare": ["mare", "maris", "mari"],
        "unda": ["unda", "undas", "undae"],
        "caelum": ["caelum", "caeli", "caelo"],
        "sidus": ["sidera", "siderum"],
        "flumen": ["flumen", "flumina"],
        "silua": ["silua", "siluas", "siluae"],
        "uentus": ["uentus", "uenti", "uentis"],
        "carmen": ["carmen", "carmina"],
        "musa": ["musa", "musae"],
        "ignis": ["ignis", "ignem", "igne"],
        "magnus": ["magnus", "magna", "magnum"],
    },
    "agriculture": {
        "ager": ["ager", "agrum", "agri", "agros"],
        "terra": ["terra", "terram", "terrae"],
        "frumentum": ["frumentum", "frumenti"],
        "uinum": ["uinum", "uini"],
        "bos": ["boues", "bouum"],
        "arbor": ["arbor", "arbores"],
        "uilla": ["uilla", "uillam"],
        "colonus": ["colonus", "coloni"],
        "aqua": ["aqua", "aquam", "aquae"],
        "pecus": ["pecus", "pecora"],
        "semen": ["semen", "semina"],
        "hortus": ["hortus", "horti"],
        "messis": ["messis", "messem"],
        "aratrum": ["aratrum", "aratro"],
    },
}
THEME_NAMES = list(THEMES)

FUNCTION_WORDS = ["et", "in", "est", "non", "cum", "ad", "quod", "qui", "sed", "ut", "que", "ex", "de",
                  "per", "sunt", "autem", "enim", "atque", "nec", "iam", "tamen", "hic", "ille", "se"]

# Slice schedule over [-449, 600] in ten bins of 105 years: dominant themes per document.
SCHEDULE = [
    ["republic", "republic", "war", "agriculture", "republic", "war"],
    ["republic", "war", "agriculture", "republic", "agriculture", "war"],
    ["republic", "war", "republic", "agriculture", "war", "republic"],
    ["republic", "war", "republic", "poetry", "war", "agriculture"],
    ["poetry", "republic", "war", "poetry", "agriculture", "poetry"],
    ["poetry", "war", "agriculture", "poetry", "republic", "war"],
    ["christian", "poetry", "war", "christian", "poetry", "war"],
    ["christian", "war", "christian", "poetry", "christian", "agriculture"],
    ["christian", "christian", "war", "christian", "christian", "christian"],
    ["christian", "war", "christian", "christian", "agriculture", "christian"],
]
OFFSETS = [5, 20, 40, 55, 75, 95]

PASSAGES = {
    (0, 0): ("tabulae_duodecim", -449, "",
             "Si in ius vocat, ito. Ni it, antestamino. Igitur em capito."),
    (3, 0): ("cicero_catilinam_1", -63, "Cicero",
             "Quo usque tandem abutere, Catilina, patientia nostra? quam diu etiam furor iste tuus nos eludet? "
             "quem ad finem sese effrenata iactabit audacia?"),
    (3, 1): ("caesar_gallico_1", -50, "Caesar",
             "Gallia est omnis divisa in partes tres, quarum unam incolunt Belgae, aliam Aquitani, tertiam qui "
             "ipsorum lingua Celtae, nostra Galli appellantur."),
    (4, 0): ("vergilius_aeneis_1", -19, "Vergilius",
             "Arma virumque cano, Troiae qui primus ab oris Italiam, fato profugus, Laviniaque venit litora."),
    (8, 0): ("augustinus_confessiones_1", 398, "Augustinus",
             "Magnus es, Domine, et laudabilis valde: magna virtus tua, et sapientiae tuae non est numerus."),
    (8, 1): ("vulgata_ioannes_1", 400, "",
             "In principio erat Verbum, et Verbum erat apud Deum, et Deus erat Verbum."),
}

AUTHORS = ["Anonymus", "Ennius", "Cato", "Plautus", "Terentius", "Lucilius", "Varro", "Sallustius", "Livius",
           "Ouidius", "Seneca", "Plinius", "Tacitus", "Suetonius", "Apuleius", "Tertullianus", "Cyprianus",
           "Lactantius", "Ambrosius", "Hieronymus", "Boethius", "Cassiodorus", "Gregorius"]


def render(word, rng):
    # classical orthography: consonantal u written as v, sometimes capitalised
    if rng.random() < 0.4:
        word = "".join("v" if c == "u" and i + 1 < len(word) and word[i + 1] in "aeiou" else c
                       for i, c in enumerate(word))
    if rng.random() < 0.08:
        word = word.capitalize()
    return word


def make_text(theme, rng, length):
    secondary = rng.choice([t for t in THEME_NAMES if t != theme])
    words = []
    for _ in range(length):
        r = rng.random()
        if r < 0.62:
            lemma = rng.choice(list(THEMES[theme]))
            words.append(render(rng.choice(THEMES[theme][lemma]), rng))
        elif r < 0.70:
            lemma = rng.choice(list(THEMES[secondary]))
            words.append(render(rng.choice(THEMES[secondary][lemma]), rng))
        else:
            words.append(rng.choice(FUNCTION_WORDS))
    out, sentence = [], []
    for w in words:
        sentence.append(w)
        if len(sentence) >= rng.randint(6, 14):
            out.append(" ".join(sentence) + rng.choice([".", ";", ",", "."]))
            sentence = []
    if sentence:
        out.append(" ".join(sentence) + ".")
    return " ".join(out) + "\n"


def write_emb1(path, ids, vectors, dim):
    with open(path.with_suffix(".emb"), "wb") as f:
        f.write(b"EMB1" + struct.pack("<II", len(ids), dim))
        for v in vectors:
            f.write(struct.pack("<%df" % dim, *v))
    with open(path.with_suffix(".ids"), "w", encoding="utf-8", newline="\n") as f:
        for i in ids:
            f.write(i + "\n")


def main():
    rng = random.Random(20240501)
    (OUT / "texts").mkdir(parents=True, exist_ok=True)
    rows, doc_themes = [], []
    for t, themes in enumerate(SCHEDULE):
        for j, theme in enumerate(themes):
            date = -449 + 105 * t + OFFSETS[j]
            doc_id = f"doc{t:02d}{j}"
            author = AUTHORS[(3 * t + j) % len(AUTHORS)] if j % 3 else ""
            text = make_text(theme, rng, rng.randint(110, 190))
            if (t, j) in PASSAGES:
                doc_id, date, author, passage = PASSAGES[(t, j)]
                text = passage + "\n" + text
            path = f"{doc_id}.txt"
            (OUT / "texts" / path).write_text(text, encoding="utf-8")
            rows.append((doc_id, path, date, author))
            doc_themes.append(theme)

    with open(OUT / "metadata.csv", "w", encoding="utf-8", newline="\n") as f:
        f.write("id,path,date,author\n")
        for doc_id, path, date, author in rows:
            author_cell = f'"{author}"' if "," in author else author
            f.write(f"{doc_id},{path},{date},{author_cell}\n")

    with open(ROOT / "latin_lemmas.tsv", "w", encoding="utf-8", newline="\n") as f:
        f.write("# surface<TAB>lemma, folded orthography; lemmas map to themselves implicitly\n")
        for theme in THEMES.values():
            for lemma, forms in theme.items():
                for form in forms:
                    if form != lemma:
                        f.write(f"{form}\t{lemma}\n")

    dim = 16
    centers = {name: [0.0] * dim for name in THEME_NAMES}
    for k, name in enumerate(THEME_NAMES):
        centers[name][k] = 4.0
        centers[name][k + 5] = 2.0
    doc_vecs = [[c + rng.gauss(0, 0.3) for c in centers[theme]] for theme in doc_themes]
    write_emb1(OUT / "docs", [r[0] for r in rows], doc_vecs, dim)

    # Word vectors: theme lemmas near their theme direction; two lemmas left out to exercise coverage reporting.
    word_ids, word_vecs = [], []
    for name in THEME_NAMES:
        for lemma in THEMES[name]:
            if lemma in ("curia", "aratrum"):
                continue
            word_ids.append(lemma)
            word_vecs.append([c / 4.0 + rng.gauss(0, 0.35) for c in centers[name]])
    write_emb1(OUT / "words", word_ids, word_vecs, dim)


if __name__ == "__main__":
    main()
