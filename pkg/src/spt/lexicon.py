"""Word lists and fragment templates behind the synthetic corpus.

Three closed-schema domains (oil-market events, scientific relations,
anatomical entities) give 26 pool schemas. Each schema owns a cue lexicon
and a handful of fragment templates; role placeholders draw from value
pools. Description keywords never occur in any query, which is what keeps
lexical retrieval blind on the default split.
"""
from __future__ import annotations

from dataclasses import dataclass

_PRICES = ["58", "63", "71", "77", "84", "92", "99", "104", "111", "118"]

POOLS: dict[str, list[str]] = {
    "COMMODITY": ["Brent", "WTI", "crude", "gasoline", "diesel", "naphtha", "jet-fuel",
                  "heating-oil", "oil", "LNG", "bitumen", "Urals", "Dubai-crude"],
    "COUNTRY": ["Libya", "Iraq", "Iran", "Nigeria", "Venezuela", "Norway", "Kuwait",
                "Angola", "Qatar", "Oman", "Algeria", "Kazakhstan"],
    "PRICE": [f"{w} ${p}" for w in ("below", "above", "near") for p in _PRICES],
    "PERCENT": [f"{n} percent" for n in ("2", "3", "4", "5", "6", "7", "8", "9", "12", "15")],
    "VOLUME": [f"{n}k bpd" for n in ("150", "200", "250", "300", "350", "400", "500", "600")],
    "PRODUCER": ["OPEC", "Aramco", "Rosneft", "Chevron", "Exxon", "Petrobras",
                 "Sinopec", "Equinor", "Lukoil", "ADNOC"],
    "BANK": ["Goldman", "Citi", "Barclays", "Morgan", "HSBC", "UBS", "Jefferies", "Nomura"],
    "PIPELINE": ["Druzhba", "Keystone", "Forties", "CPC", "Colonial", "Baku-Ceyhan",
                 "Trans-Alaska", "Sumed"],
    "METHOD": ["neural parser", "CRF tagger", "beam search", "LSTM encoder", "graph kernel",
               "SVM classifier", "attention model", "HMM aligner", "Bayesian model",
               "spectral clustering", "transformer decoder", "logistic regression"],
    "TASK": ["machine translation", "speech recognition", "entity linking", "dependency parsing",
             "summarization", "question answering", "image retrieval", "POS tagging",
             "coreference resolution", "sentiment analysis"],
    "METRIC": ["BLEU", "F1", "accuracy", "perplexity", "word error rate", "recall",
               "ROUGE", "MAP"],
    "FEATURE": ["syntactic features", "lexical features", "word embeddings", "prosodic cues",
                "character n-grams", "dependency paths", "topic vectors", "acoustic frames"],
    "CATEGORY": ["learning algorithm", "probabilistic model", "search strategy",
                 "sequence model", "kernel method", "generative model"],
    "COMPONENT": ["decoder", "encoder", "lexicon", "tokenizer", "reranker", "language model",
                  "alignment table"],
    "SYSTEM": ["translation system", "dialogue system", "retrieval engine", "tagging pipeline",
               "recognition toolkit", "parsing framework"],
    "ORGAN": ["liver", "kidney", "heart", "lung", "spleen", "pancreas", "stomach", "bladder",
              "thyroid", "brain"],
    "TISSUE": ["epithelium", "endothelium", "cartilage", "stroma", "mucosa", "dermis",
               "myocardium", "adipose tissue"],
    "CELL": ["hepatocytes", "neurons", "fibroblasts", "macrophages", "lymphocytes",
             "keratinocytes", "platelets", "astrocytes"],
    "CELLCOMP": ["mitochondria", "nucleus", "cytoplasm", "ribosomes", "plasma membrane",
                 "lysosomes", "golgi apparatus"],
    "SUBDIVISION": ["abdomen", "thorax", "pelvis", "neck", "forearm", "scalp", "lower back"],
    "STRUCTURE": ["artery", "vein", "nerve", "lymph node", "retina", "aorta", "ureter"],
    "DEVSTRUCT": ["embryo", "neural tube", "blastocyst", "limb bud", "somite", "neural crest"],
    "ANATSYS": ["immune system", "nervous system", "vascular system", "digestive tract",
                "endocrine system", "lymphatic system"],
    "PATHFORM": ["tumor", "carcinoma", "lesion", "cyst", "polyp", "metastasis", "granuloma"],
    "SUBSTANCE": ["blood", "serum", "plasma", "urine", "bile", "saliva", "sputum"],
    "IMMATERIAL": ["lumen", "cavity", "foramen", "canal", "sinus", "ventricle"],
    # held-out pools used only by open-generation families
    "PERSON": ["John", "Maria", "Chen", "Priya", "Ahmed", "Olga", "Kenji", "Fatima",
               "Lucas", "Amara", "Tomas", "Ingrid"],
    "YEAR": ["1998", "2003", "2007", "2010", "2012", "2015", "2019", "2021"],
    "COMPANY": ["TechCorp", "Nexora", "Zentrix", "Quantica", "Lumora", "Veltrix", "Orbify",
                "Kalvio"],
    "CITY": ["Lisbon", "Toronto", "Nairobi", "Osaka", "Denver", "Krakow", "Perth", "Bogota"],
    "PRIZE": ["Turing Award", "Pulitzer Prize", "Booker Prize", "Fields Medal", "Grammy Award",
              "Abel Prize"],
    "BOOK": ["Silent Harbor", "Glass Rivers", "Paper Moons", "Iron Gardens", "Quiet Storms",
             "Velvet Maps"],
    "PUBLISHER": ["Penguin", "Harper", "Vintage", "Orbit", "Tor", "Faber"],
    "ALBUM": ["Neon Skies", "Echo Lines", "Golden Hour", "Night Drive", "Wild Bloom"],
    "LABEL": ["Motown", "Atlantic", "Interscope", "Sub-Pop", "Warp", "Domino"],
    "OFFICE": ["mayor", "senator", "governor", "chancellor", "councillor"],
    "DEAL": ["$2 billion", "$450 million", "$90 million", "$1 billion", "$3 billion"],
}


@dataclass(frozen=True)
class Family:
    """One schema (pool or open) with everything needed to write queries."""

    name: str
    task_kind: str
    roles: tuple[tuple[str, str], ...]   # (role name, pool key or "TRIGGER")
    triggers: tuple[str, ...]
    templates: tuple[str, ...]
    description: tuple[str, ...] = ()

    @property
    def role_names(self) -> tuple[str, ...]:
        return tuple(r for r, _ in self.roles)


def _f(name, kind, roles, triggers, templates, description=()):
    return Family(name, kind, tuple(roles), tuple(triggers), tuple(templates), tuple(description))


# Placeholders: {T} is the cue word; {role} is filled from that role's pool.
POOL_FAMILIES: list[Family] = [
    _f("MOVEMENT-DOWN-LOSS", "EE",
       [("event_trigger", "TRIGGER"), ("ITEM", "COMMODITY"), ("FINAL_VALUE", "PRICE")],
       ["dips", "falls", "slides", "drops", "tumbles", "sinks"],
       ["{ITEM} {T} {FINAL_VALUE}", "{ITEM} futures {T} {FINAL_VALUE} on weak demand",
        "prices for {ITEM} {T} {FINAL_VALUE}"],
       ["downturn", "depreciation", "decline", "bearish"]),
    _f("CRISIS", "EE",
       [("event_trigger", "TRIGGER"), ("ITEM", "COMMODITY"), ("PLACE", "COUNTRY")],
       ["crisis", "turmoil", "shortage", "emergency", "standoff"],
       ["{PLACE} says {ITEM} {T} is over", "{ITEM} {T} deepens in {PLACE}",
        "a {ITEM} {T} grips {PLACE}"],
       ["catastrophe", "instability", "breakdown", "calamity"]),
    _f("MOVEMENT-UP-GAIN", "EE",
       [("event_trigger", "TRIGGER"), ("ITEM", "COMMODITY"), ("INCREMENT", "PERCENT")],
       ["climbs", "rises", "jumps", "gains", "rallies", "surges"],
       ["{ITEM} {T} {INCREMENT}", "{ITEM} {T} {INCREMENT} after supply worries",
        "traders saw {ITEM} {T} {INCREMENT}"],
       ["upswing", "appreciation", "bullish", "advance"]),
    _f("PRODUCTION-CUT", "EE",
       [("event_trigger", "TRIGGER"), ("PRODUCER", "PRODUCER"), ("AMOUNT", "VOLUME")],
       ["cuts", "curbs", "trims", "slashes", "reduces"],
       ["{PRODUCER} {T} output by {AMOUNT}", "{PRODUCER} {T} exports by {AMOUNT} from next month"],
       ["curtailment", "restraint", "quota", "withholding"]),
    _f("PRODUCTION-HIKE", "EE",
       [("event_trigger", "TRIGGER"), ("PRODUCER", "PRODUCER"), ("ADDED_VOLUME", "VOLUME")],
       ["boosts", "lifts", "expands", "ramps"],
       ["{PRODUCER} {T} output by {ADDED_VOLUME}", "{PRODUCER} {T} pumping by {ADDED_VOLUME}"],
       ["expansion", "escalation", "capacity", "augmentation"]),
    _f("EMBARGO", "EE",
       [("event_trigger", "TRIGGER"), ("IMPOSER", "COUNTRY"), ("TARGET", "COUNTRY")],
       ["embargo", "sanctions", "blockade", "ban"],
       ["{IMPOSER} announces {T} against {TARGET}", "{IMPOSER} widens its {T} on {TARGET}"],
       ["prohibition", "restriction", "punitive", "measures"]),
    _f("PRICE-FORECAST", "EE",
       [("event_trigger", "TRIGGER"), ("FORECASTER", "BANK"), ("FORECAST_PRICE", "PRICE")],
       ["forecasts", "predicts", "projects", "expects"],
       ["{FORECASTER} {T} prices {FORECAST_PRICE} next quarter",
        "analysts at {FORECASTER} {T} a level {FORECAST_PRICE}"],
       ["outlook", "estimate", "projection", "anticipation"]),
    _f("PIPELINE-OUTAGE", "EE",
       [("event_trigger", "TRIGGER"), ("FACILITY", "PIPELINE"), ("LOCATION", "COUNTRY")],
       ["outage", "leak", "shutdown", "rupture"],
       ["a {T} halts flows on the {FACILITY} line in {LOCATION}",
        "{FACILITY} pipeline {T} reported in {LOCATION}"],
       ["interruption", "infrastructure", "stoppage", "conduit"]),
    _f("USED-FOR", "RE",
       [("method", "METHOD"), ("task", "TASK")],
       ["apply", "employ", "adopt", "leverage"],
       ["we {T} a {method} for {task}", "researchers {T} the {method} to improve {task}"],
       ["utilization", "purpose", "application", "instrumental"]),
    _f("FEATURE-OF", "RE",
       [("feature", "FEATURE"), ("entity", "SYSTEM")],
       ["characterize", "distinguish", "describe", "profile"],
       ["{feature} {T} the {entity}", "the {entity} is {T} by {feature} alone"],
       ["attribute", "property", "characteristic", "trait"]),
    _f("HYPONYM-OF", "RE",
       [("hyponym", "METHOD"), ("hypernym", "CATEGORY")],
       ["instance", "variant", "subclass", "specialization"],
       ["the {hyponym} is a {T} of {hypernym}", "a {hyponym} counts as one {T} of {hypernym}"],
       ["taxonomy", "hierarchy", "subordinate", "isa"]),
    _f("PART-OF", "RE",
       [("part", "COMPONENT"), ("whole", "SYSTEM")],
       ["component", "module", "submodule", "building-block"],
       ["the {part} is a {T} within the {whole}", "every {whole} has a {part} {T}"],
       ["meronymy", "constituent", "containment", "composition"]),
    _f("COMPARE", "RE",
       [("compared_method", "METHOD"), ("baseline", "METHOD")],
       ["outperforms", "beats", "surpasses", "rivals"],
       ["the {compared_method} {T} the {baseline}", "our {compared_method} {T} a strong {baseline}"],
       ["comparison", "contrast", "juxtaposition", "benchmarking"]),
    _f("EVALUATE-FOR", "RE",
       [("metric", "METRIC"), ("evaluated_task", "TASK")],
       ["measured", "evaluated", "assessed", "scored"],
       ["{evaluated_task} is {T} with {metric}", "systems for {evaluated_task} are {T} by {metric}"],
       ["evaluation", "appraisal", "quantification", "gauging"]),
    _f("CONJUNCTION", "RE",
       [("first_item", "FEATURE"), ("second_item", "FEATURE")],
       ["combined", "paired", "coupled", "merged"],
       ["{first_item} are {T} with {second_item}", "we use {first_item} {T} with {second_item}"],
       ["coordination", "conjunct", "togetherness", "union"]),
    _f("ORGAN", "NER", [("organ", "ORGAN")],
       ["biopsy", "transplant", "resection", "enlargement"],
       ["{T} of the {organ} was performed", "the {organ} showed {T} on imaging"],
       ["viscera", "visceral", "parenchymal", "organs"]),
    _f("TISSUE", "NER", [("tissue", "TISSUE")],
       ["histology", "staining", "fibrosis", "thickening"],
       ["{T} of {tissue} was observed", "marked {T} of the {tissue} appeared"],
       ["histological", "textural", "layered", "tissues"]),
    _f("CELL", "NER", [("cell", "CELL")],
       ["proliferation", "apoptosis", "migration", "differentiation"],
       ["{T} of {cell} increased", "we tracked {T} of {cell} in culture"],
       ["cellular", "cytology", "unicellular", "cells"]),
    _f("CELLULAR-COMPONENT", "NER", [("cellular_component", "CELLCOMP")],
       ["localized", "accumulated", "fragmented", "swollen"],
       ["protein {T} in the {cellular_component}", "signal {T} near the {cellular_component}"],
       ["organelle", "subcellular", "compartment", "intracellular"]),
    _f("ORGANISM-SUBDIVISION", "NER", [("subdivision", "SUBDIVISION")],
       ["pain", "swelling", "bruising", "tenderness"],
       ["{T} in the {subdivision} region", "patients reported {T} of the {subdivision}"],
       ["bodily", "regional", "topographic", "somatic"]),
    _f("MULTI-TISSUE-STRUCTURE", "NER", [("structure", "STRUCTURE")],
       ["occlusion", "stenosis", "dilation", "compression"],
       ["{T} of the {structure} was found", "imaging showed {T} of the {structure}"],
       ["composite", "multilayer", "vessels", "conduits"]),
    _f("DEVELOPING-STRUCTURE", "NER", [("developing_structure", "DEVSTRUCT")],
       ["formation", "closure", "patterning", "segmentation"],
       ["{T} of the {developing_structure} during development",
        "abnormal {T} of the {developing_structure} occurred"],
       ["embryonic", "ontogeny", "morphogenesis", "nascent"]),
    _f("ANATOMICAL-SYSTEM", "NER", [("anatomical_system", "ANATSYS")],
       ["dysfunction", "activation", "involvement", "failure"],
       ["{T} of the {anatomical_system} was noted", "severe {T} of the {anatomical_system}"],
       ["systemic", "physiological", "organwide", "integrated"]),
    _f("PATHOLOGICAL-FORMATION", "NER", [("pathological_formation", "PATHFORM")],
       ["excised", "detected", "removed", "imaged"],
       ["a {pathological_formation} was {T}", "the {pathological_formation} was {T} last week"],
       ["neoplasm", "pathology", "malignancy", "abnormality"]),
    _f("ORGANISM-SUBSTANCE", "NER", [("substance", "SUBSTANCE")],
       ["samples", "levels", "cultures", "assays"],
       ["{substance} {T} were collected", "we analysed {substance} {T} from donors"],
       ["fluid", "secretion", "bodily-fluid", "humoral"]),
    _f("IMMATERIAL-ANATOMICAL-ENTITY", "NER", [("immaterial_entity", "IMMATERIAL")],
       ["narrowing", "widening", "obstruction", "opening"],
       ["{T} of the {immaterial_entity} was seen", "marked {T} of the {immaterial_entity}"],
       ["space", "void", "hollow", "aperture"]),
]

OPEN_FAMILIES: list[Family] = [
    _f("COMPANY-FOUNDING", "ODIE-like",
       [("Person", "PERSON"), ("Year", "YEAR"), ("Found Organization", "COMPANY")],
       ["founded", "started", "launched"],
       ["{Person} , a professor at MIT , {T} {Found Organization} in {Year}",
        "in {Year} {Person} {T} {Found Organization}"]),
    _f("AWARD-WINNING", "ODIE-like",
       [("Winner", "PERSON"), ("Prize", "PRIZE"), ("Award Year", "YEAR")],
       ["received", "won", "accepted"],
       ["{Winner} {T} the {Prize} in {Award Year}", "in {Award Year} the {Prize} was {T} by {Winner}"]),
    _f("MARRIAGE", "ODIE-like",
       [("Spouse", "PERSON"), ("Partner", "PERSON"), ("Wedding Place", "CITY")],
       ["married", "wed"],
       ["{Spouse} {T} {Partner} in {Wedding Place}", "{Spouse} and {Partner} {T} quietly in {Wedding Place}"]),
    _f("RELOCATION", "ODIE-like",
       [("Person", "PERSON"), ("Origin City", "CITY"), ("Destination City", "CITY")],
       ["moved", "relocated", "emigrated"],
       ["{Person} {T} from {Origin City} to {Destination City}",
        "after years in {Origin City} {Person} {T} to {Destination City}"]),
    _f("BOOK-PUBLICATION", "ODIE-like",
       [("Author", "PERSON"), ("Book Title", "BOOK"), ("Publisher", "PUBLISHER")],
       ["published", "released", "printed"],
       ["{Author} {T} {Book Title} with {Publisher}", "{Publisher} {T} the novel {Book Title} by {Author}"]),
    _f("ALBUM-RELEASE", "ODIE-like",
       [("Artist", "PERSON"), ("Album", "ALBUM"), ("Record Label", "LABEL")],
       ["dropped", "unveiled", "issued"],
       ["{Artist} {T} the album {Album} on {Record Label}", "{Record Label} {T} {Album} by {Artist}"]),
    _f("ELECTION", "ODIE-like",
       [("Candidate", "PERSON"), ("Office", "OFFICE"), ("Election Year", "YEAR")],
       ["elected", "chosen", "voted"],
       ["{Candidate} was {T} {Office} in {Election Year}",
        "in {Election Year} voters {T} {Candidate} as {Office}"]),
    _f("ACQUISITION", "ODIE-like",
       [("Buyer Company", "COMPANY"), ("Acquired Company", "COMPANY"), ("Deal Value", "DEAL")],
       ["acquired", "bought", "purchased"],
       ["{Buyer Company} {T} {Acquired Company} for {Deal Value}",
        "{Acquired Company} was {T} by {Buyer Company} for {Deal Value}"]),
]

# Schema-free topics: (template, {slot: values}); no word overlaps the pools above.
FREE_SLOTS: dict[str, list[str]] = {
    "TEAM": ["Falcons", "Tigers", "Rovers", "Eagles", "Wolves", "Sharks", "Hornets", "Bulls"],
    "VENUE": ["the stadium", "the arena", "the ballpark", "the velodrome"],
    "WEATHER": ["rain", "snow", "sunshine", "fog", "thunderstorms", "hail", "drizzle"],
    "REGION": ["the coast", "the valley", "the highlands", "the plains", "the islands"],
    "INGREDIENT": ["basil", "garlic", "butter", "honey", "cinnamon", "ginger", "parsley"],
    "DISH": ["soup", "sauce", "risotto", "stew", "curry", "salad"],
    "ART": ["sculptures", "paintings", "tapestries", "photographs", "ceramics"],
    "DAY": ["Monday", "Tuesday", "Friday", "Saturday", "Sunday"],
    "HOBBY": ["chess", "gardening", "knitting", "hiking", "sailing", "pottery"],
}
FREE_TEMPLATES: list[str] = [
    "the {TEAM} defeated the {TEAM} at {VENUE}",
    "{WEATHER} is expected across {REGION} this weekend",
    "add {INGREDIENT} and stir the {DISH} gently",
    "the gallery opens a show of {ART} on {DAY}",
    "a club for {HOBBY} meets every {DAY}",
    "fans cheered as the {TEAM} equalized late",
    "forecasters warn of {WEATHER} over {REGION} on {DAY}",
    "season the {DISH} with {INGREDIENT} before serving",
]

CONNECTORS = [",", ", while", ", and", ", as", "; meanwhile", "; separately"]
DESCRIPTION_FRAME = ("schema", "capturing")
