//! Template-grammar corpus with matching rule files, for self-contained runs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Dataset, Sentence, SplitTag};
use crate::error::{Error, Result};
use crate::rules::{Polarity, RuleSpec, Scope};

pub const SYNTH_TRAIN_SIZE: usize = 400;
pub const SYNTH_TEST_SIZE: usize = 300;

const CITIES: &[&str] = &[
    "boston", "miami", "denver", "dallas", "atlanta", "seattle", "new york", "los angeles",
    "san francisco", "salt lake city", "pittsburgh", "phoenix", "chicago", "las vegas",
    "detroit", "houston",
];
const AIRLINES: &[&str] = &[
    "delta", "united", "american", "continental", "alaska", "us air", "jetblue", "southwest",
];
const DAYS: &[&str] = &[
    "monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday",
];

/// `(intent, weight, templates)`. `[a|b]` picks one option; placeholders
/// are `{from}`, `{to}`, `{in}`, `{airline}` and `{day}`.
const GRAMMAR: &[(&str, u32, &[&str])] = &[
    (
        "flight",
        8,
        &[
            "[show me|list|give me|display] [flights|flight|planes|connections] from {from} to {to}",
            "[list|show|display] {airline} [flights|planes] from {from} to {to} on {day}",
            "i [want|need|would like] to [fly|travel|go] from {from} to {to} on {day}",
            "what [flights|planes|connections] [go|leave|depart] from {from} to {to}",
            "i need a [flight|plane|connection] to {to} on {day}",
            "are there any [flights|planes] from {from} to {to} on {day} [afternoon|morning|evening]",
        ],
    ),
    (
        "airfare",
        5,
        &[
            "what is the [fare|price|cost|rate] from {from} to {to}",
            "how much does it [cost|run] to [fly|travel] from {from} to {to}",
            "show me the [cheapest|lowest|least expensive] [fares|prices|rates] from {from} to {to} on {airline}",
            "what are the [prices|fares|costs] of {airline} flights to {to}",
            "how much is a [ticket|seat|one way ticket|round trip ticket] to {to} on {day}",
            "what is the [cheapest|lowest priced] [flight|connection] from {from} to {to}",
        ],
    ),
    (
        "ground_service",
        4,
        &[
            "what [ground transportation|transportation|local transport] is available in {in}",
            "is there a [taxi|limousine|shuttle|bus] service in {in}",
            "how do i get [downtown|to the city center|to my hotel] in {in}",
            "show me [car rentals|rental cars|car rental agencies] in {in}",
            "what [ground transportation|transportation] is there from the airport in {in}",
        ],
    ),
    (
        "airline",
        3,
        &[
            "which [airlines|carriers] fly from {from} to {to}",
            "what [airlines|carriers] have flights from {from} to {to} on {day}",
            "[who|what company] flies from {from} to {to}",
            "which [airline|carrier] [serves|flies to] {to}",
            "list the [airlines|carriers] that [go|fly] to {to} on {day}",
        ],
    ),
    (
        "flight_time",
        3,
        &[
            "what time does the [flight|plane] from {from} to {to} [leave|depart|arrive]",
            "when does {airline} [flight|plane] to {to} [leave|depart|arrive] on {day}",
            "[give me|show me|list] the [departure|arrival] times from {from} to {to}",
            "what are the [schedules|timetables] for flights from {from} to {to}",
        ],
    ),
    (
        "distance",
        2,
        &[
            "how far is {in} airport from downtown",
            "what is the distance from {from} to {to}",
            "how [long|far] is the [trip|drive|ride] from the airport to downtown {in}",
            "how many miles [is it|are there] from {from} to {to}",
        ],
    ),
];

const FLIGHT_WORDS: &[&str] = &["flights", "flight", "planes", "plane", "connections", "connection"];
const SHOW_WORDS: &[&str] = &["show", "list", "give", "display"];
const FARE_WORDS: &[&str] = &["fares", "fare", "prices", "price", "costs", "cost", "rates", "rate"];
const GROUND_WORDS: &[&str] = &[
    "ground transportation", "transportation", "local transport", "taxi", "limousine",
    "shuttle", "bus", "car rentals", "car rental", "rental cars",
];
const CARRIER_WORDS: &[&str] = &["airlines", "airline", "carriers", "carrier"];

/// Replaces every `[a|b|...]` group with one of its options.
fn choose_options(template: &str, rng: &mut ChaCha8Rng) -> String {
    let mut out = String::new();
    let mut rest = template;
    while let Some(open) = rest.find('[') {
        let close = open + rest[open..].find(']').expect("balanced template");
        out.push_str(&rest[..open]);
        let options: Vec<&str> = rest[open + 1..close].split('|').collect();
        out.push_str(options.choose(rng).expect("non-empty options"));
        rest = &rest[close + 1..];
    }
    out.push_str(rest);
    out
}

fn slot_for(placeholder: &str) -> Option<(&'static str, &'static [&'static str])> {
    Some(match placeholder {
        "{from}" => ("fromloc.city", CITIES),
        "{to}" => ("toloc.city", CITIES),
        "{in}" => ("city_name", CITIES),
        "{airline}" => ("airline_name", AIRLINES),
        "{day}" => ("depart_date.day_name", DAYS),
        _ => return None,
    })
}

fn sentence(id: usize, rng: &mut ChaCha8Rng) -> Sentence {
    let weights: u32 = GRAMMAR.iter().map(|g| g.1).sum();
    let mut pick = rng.gen_range(0..weights);
    let (intent, _, templates) = GRAMMAR
        .iter()
        .find(|g| {
            if pick < g.1 {
                true
            } else {
                pick -= g.1;
                false
            }
        })
        .expect("weights cover the range");
    let template = choose_options(templates.choose(rng).expect("non-empty templates"), rng);
    let mut tokens = Vec::new();
    let mut slots = Vec::new();
    let mut used_city: Option<&str> = None;
    for piece in template.split(' ') {
        match slot_for(piece) {
            None => {
                tokens.push(piece.to_string());
                slots.push("O".to_string());
            }
            Some((label, words)) => {
                let value = loop {
                    let w = *words.choose(rng).expect("non-empty word list");
                    if Some(w) != used_city {
                        break w;
                    }
                };
                if words == CITIES {
                    used_city = Some(value);
                }
                for (i, w) in value.split(' ').enumerate() {
                    tokens.push(w.to_string());
                    slots.push(format!("{}-{label}", if i == 0 { "B" } else { "I" }));
                }
            }
        }
    }
    Sentence {
        id,
        tokens,
        intent: intent.to_string(),
        slots,
    }
}

fn rule(id: &str, scope: Scope, pattern: &str, retag: &str) -> RuleSpec {
    RuleSpec {
        id: id.to_string(),
        scope,
        pattern: pattern.to_string(),
        retag: retag.to_string(),
        polarity: Polarity::Positive,
        group_tags: Vec::new(),
        clue_groups: Vec::new(),
        target_labels: Vec::new(),
    }
}

fn intent_rules() -> Vec<RuleSpec> {
    let r = |id, pattern, retag, clues: &[usize]| RuleSpec {
        clue_groups: clues.to_vec(),
        ..rule(id, Scope::Intent, pattern, retag)
    };
    vec![
        r("flight_kw", r"(__FLIGHT)\s(?:from|to|go|leave|depart)", "flight", &[1]),
        r("flight_list", r"^(__SHOW)\s.*(__FLIGHT)", "flight", &[2]),
        r("fare_kw", "(__FARE)", "airfare", &[1]),
        r("fare_how_much", r"(how\smuch)\s(?:is|does)\s(.*)\s(cost|run|ticket|seat)", "airfare", &[1, 3]),
        r("ground_kw", "(__GROUND)", "ground_service", &[1]),
        r("airline_which", r"(which|what)\s(__CARRIER)\s(fly|flies|have|serves?|go)", "airline", &[2]),
        r("airline_that", r"(__CARRIER)\sthat", "airline", &[1]),
        r("time_when", r"(what\stime|when)\s(does)\s.*(leave|depart|arrive)", "flight_time", &[1, 3]),
        r("time_list", r"(departure|arrival)\s(times?)", "flight_time", &[1, 2]),
        r("distance_kw", r"(how\sfar|distance|how\smany\smiles)", "distance", &[1]),
    ]
}

fn slot_rule(id: &str, pattern: &str, tags: &[(usize, &str)], targets: &[&str]) -> RuleSpec {
    let retag = tags.first().map_or("", |t| t.1);
    RuleSpec {
        group_tags: tags.iter().map(|(g, t)| (*g, t.to_string())).collect(),
        target_labels: targets.iter().map(|t| t.to_string()).collect(),
        ..rule(id, Scope::Slot, pattern, retag)
    }
}

/// Simplified REtags; `city` stands for three target labels.
fn slot_rules() -> Vec<RuleSpec> {
    vec![
        slot_rule(
            "city",
            "(__CITY)",
            &[(1, "city")],
            &["fromloc.city", "toloc.city", "city_name"],
        ),
        slot_rule("airline", "(__AIRLINE)", &[(1, "airline_name")], &[]),
        slot_rule("day", "(__DAY)", &[(1, "depart_date.day_name")], &[]),
    ]
}

/// Target slot labels as REtags, with simple and complex tiers.
fn slot_rules_full() -> Vec<RuleSpec> {
    vec![
        slot_rule("from_city", r"from\s(__CITY)", &[(1, "fromloc.city")], &[]),
        slot_rule("to_city", r"to\s(__CITY)", &[(1, "toloc.city")], &[]),
        slot_rule("in_city", r"in\s(__CITY)", &[(1, "city_name")], &[]),
        slot_rule("airline", "(__AIRLINE)", &[(1, "airline_name")], &[]),
        slot_rule("on_day", r"on\s(__DAY)", &[(1, "depart_date.day_name")], &[]),
        slot_rule(
            "from_to_on",
            r"from\s(__CITY)\sto\s(__CITY)\son\s(__DAY)",
            &[(1, "fromloc.city"), (2, "toloc.city"), (3, "depart_date.day_name")],
            &[],
        ),
        slot_rule(
            "airline_from_to",
            r"(__AIRLINE)\sflights\sfrom\s(__CITY)\sto\s(__CITY)",
            &[(1, "airline_name"), (2, "fromloc.city"), (3, "toloc.city")],
            &[],
        ),
    ]
}

fn macros() -> BTreeMap<String, Vec<String>> {
    let list = |w: &[&str]| w.iter().map(|s| s.to_string()).collect();
    BTreeMap::from([
        ("__AIRLINE".to_string(), list(AIRLINES)),
        ("__CARRIER".to_string(), list(CARRIER_WORDS)),
        ("__CITY".to_string(), list(CITIES)),
        ("__DAY".to_string(), list(DAYS)),
        ("__FARE".to_string(), list(FARE_WORDS)),
        ("__FLIGHT".to_string(), list(FLIGHT_WORDS)),
        ("__GROUND".to_string(), list(GROUND_WORDS)),
        ("__SHOW".to_string(), list(SHOW_WORDS)),
    ])
}

fn jsonl(rules: &[RuleSpec]) -> String {
    rules
        .iter()
        .map(|r| serde_json::to_string(r).expect("rule specs serialize") + "\n")
        .collect()
}

/// A generated corpus and the text of its rule and macro files.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub train: Dataset,
    pub test: Dataset,
    pub intent_rules: String,
    pub slot_rules: String,
    pub slot_rules_full: String,
    pub macros: String,
}

/// Where [`SyntheticCorpus::write`] put each file.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticFiles {
    pub train: PathBuf,
    pub test: PathBuf,
    pub intent_rules: PathBuf,
    pub slot_rules: PathBuf,
    pub slot_rules_full: PathBuf,
    pub macros: PathBuf,
}

pub fn generate_synthetic(seed: u64) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train = (0..SYNTH_TRAIN_SIZE).map(|i| sentence(i, &mut rng)).collect();
    let test = (0..SYNTH_TEST_SIZE).map(|i| sentence(i, &mut rng)).collect();
    SyntheticCorpus {
        train: Dataset::new(train, SplitTag::Train),
        test: Dataset::new(test, SplitTag::Test),
        intent_rules: jsonl(&intent_rules()),
        slot_rules: jsonl(&slot_rules()),
        slot_rules_full: jsonl(&slot_rules_full()),
        macros: serde_json::to_string_pretty(&macros()).expect("macros serialize") + "\n",
    }
}

impl SyntheticCorpus {
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<SyntheticFiles> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = SyntheticFiles {
            train: dir.join("train.txt"),
            test: dir.join("test.txt"),
            intent_rules: dir.join("intent_rules.jsonl"),
            slot_rules: dir.join("slot_rules.jsonl"),
            slot_rules_full: dir.join("slot_rules_full.jsonl"),
            macros: dir.join("macros.json"),
        };
        self.train.save(&files.train)?;
        self.test.save(&files.test)?;
        for (path, text) in [
            (&files.intent_rules, &self.intent_rules),
            (&files.slot_rules, &self.slot_rules),
            (&files.slot_rules_full, &self.slot_rules_full),
            (&files.macros, &self.macros),
        ] {
            fs::write(path, text).map_err(|e| Error::io(path, e))?;
        }
        Ok(files)
    }
}
