//! Template-generated two-domain suggestion corpora.
//!
//! Suggestions come from imperative templates and non-suggestions from
//! declarative ones; the template words are shared across domains while the
//! content words (nouns and adjectives) come from per-domain lexicons.

use serde::{Deserialize, Serialize};

use super::dataset::{Domain, RawExample};
use crate::error::{Error, Result};
use crate::tensor::RngStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lexicon {
    pub nouns: Vec<String>,
    pub adjectives: Vec<String>,
}

impl Lexicon {
    fn from_words(nouns: &[&str], adjectives: &[&str]) -> Self {
        Lexicon {
            nouns: nouns.iter().map(|s| s.to_string()).collect(),
            adjectives: adjectives.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn electronics() -> Self {
        Self::from_words(
            &[
                "battery", "screen", "keyboard", "charger", "camera", "speaker", "headphones", "cable", "adapter",
                "router", "laptop", "tablet", "phone", "mouse", "monitor", "printer", "remote", "firmware", "driver",
                "touchpad", "microphone", "webcam", "stylus", "dock", "port", "antenna", "sensor", "processor",
                "bluetooth", "trackpad",
            ],
            &[
                "faster", "brighter", "lighter", "thinner", "louder", "wireless", "waterproof", "sturdier", "cheaper",
                "smarter", "backlit", "compact", "durable", "quieter", "sharper",
            ],
        )
    }

    pub fn hotels() -> Self {
        Self::from_words(
            &[
                "room", "breakfast", "pool", "lobby", "shuttle", "towel", "pillow", "balcony", "reception", "minibar",
                "elevator", "sauna", "spa", "buffet", "parking", "bathroom", "shower", "carpet", "curtain",
                "concierge", "terrace", "restaurant", "gym", "hallway", "bed", "blanket", "kettle", "wardrobe",
                "garden", "suite",
            ],
            &[
                "cleaner", "warmer", "cozier", "larger", "calmer", "fresher", "softer", "spacious", "tidier",
                "roomier", "sunnier", "airier", "friendlier", "nicer", "safer",
            ],
        )
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.nouns.iter().chain(&self.adjectives).map(String::as_str)
    }
}

/// Imperative templates; `{n}`/`{m}` are nouns, `{a}` an adjective.
pub const SUGGESTION_TEMPLATES: &[&str] = &[
    "please add a {a} {n}",
    "it would be great if the {n} was {a}",
    "you should make the {n} {a}",
    "i suggest adding a {a} {n} to the {m}",
    "consider offering a {a} {n}",
    "please include a {n} with the next version",
];

pub const STATEMENT_TEMPLATES: &[&str] = &[
    "the {n} is {a}",
    "i bought the {n} last week",
    "my {n} stopped working after a month",
    "the {n} was {a} and the {m} was fine",
    "we used the {n} every day",
    "this {n} looks {a}",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub train: usize,
    pub trial_a: usize,
    pub trial_b: usize,
    pub test_a: usize,
    pub test_b: usize,
    pub positive_rate: f64,
    pub lexicon_a: Lexicon,
    pub lexicon_b: Lexicon,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            train: 2000,
            trial_a: 300,
            trial_b: 300,
            test_a: 400,
            test_b: 400,
            positive_rate: 0.5,
            lexicon_a: Lexicon::electronics(),
            lexicon_b: Lexicon::hotels(),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, n) in [
            ("train", self.train),
            ("trial_a", self.trial_a),
            ("trial_b", self.trial_b),
            ("test_a", self.test_a),
            ("test_b", self.test_b),
        ] {
            if n == 0 {
                return Err(Error::Config(format!("synthetic split {name} has size 0")));
            }
        }
        if !(0.0..=1.0).contains(&self.positive_rate) {
            return Err(Error::Config(format!("positive rate {} outside [0, 1]", self.positive_rate)));
        }
        for lex in [&self.lexicon_a, &self.lexicon_b] {
            if lex.nouns.is_empty() || lex.adjectives.is_empty() {
                return Err(Error::Config("lexicons need nouns and adjectives".into()));
            }
        }
        if self.lexicon_a.words().any(|w| self.lexicon_b.words().any(|v| v == w)) {
            return Err(Error::Config("domain lexicons must be disjoint".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub train: Vec<RawExample>,
    pub trial_a: Vec<RawExample>,
    pub trial_b: Vec<RawExample>,
    pub test_a: Vec<RawExample>,
    pub test_b: Vec<RawExample>,
}

impl SynthCorpus {
    /// `(file stem, split)` pairs in a fixed order.
    pub fn splits(&self) -> [(&'static str, &[RawExample]); 5] {
        [
            ("train", &self.train),
            ("trial_a", &self.trial_a),
            ("trial_b", &self.trial_b),
            ("test_a", &self.test_a),
            ("test_b", &self.test_b),
        ]
    }
}

fn fill(template: &str, lex: &Lexicon, rng: &mut RngStream) -> String {
    let n = rng.choose(&lex.nouns).clone();
    let mut m = rng.choose(&lex.nouns).clone();
    while m == n && lex.nouns.len() > 1 {
        m = rng.choose(&lex.nouns).clone();
    }
    let a = rng.choose(&lex.adjectives);
    template.replace("{n}", &n).replace("{m}", &m).replace("{a}", a)
}

fn sentence(label: u8, lex: &Lexicon, rng: &mut RngStream) -> String {
    let templates = if label == 1 {
        SUGGESTION_TEMPLATES
    } else {
        STATEMENT_TEMPLATES
    };
    let body = fill(rng.choose(templates), lex, rng);
    let mut chars = body.chars();
    let first = chars.next().map(|c| c.to_uppercase().collect::<String>()).unwrap_or_default();
    let end = if rng.bernoulli(0.5) { "." } else { "!" };
    format!("{first}{}{end}", chars.as_str())
}

fn split(name: &str, n: usize, rate: f64, lex: &Lexicon, domain: Domain, rng: &mut RngStream) -> Vec<RawExample> {
    let positives = (n as f64 * rate).round() as usize;
    let mut labels: Vec<u8> = (0..n).map(|i| u8::from(i < positives)).collect();
    rng.shuffle(&mut labels);
    labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| RawExample {
            id: format!("{name}-{i:05}"),
            sentence: sentence(label, lex, rng),
            label: Some(label),
            domain,
        })
        .collect()
}

/// Deterministic for a given `(spec, rng seed)`.
pub fn synth_generate(spec: &SynthSpec, rng: &RngStream) -> Result<SynthCorpus> {
    spec.validate()?;
    let r = spec.positive_rate;
    let (a, b) = (&spec.lexicon_a, &spec.lexicon_b);
    Ok(SynthCorpus {
        train: split("train", spec.train, r, a, Domain::Source, &mut rng.child(0)),
        trial_a: split("trial_a", spec.trial_a, r, a, Domain::Source, &mut rng.child(1)),
        trial_b: split("trial_b", spec.trial_b, r, b, Domain::Target, &mut rng.child(2)),
        test_a: split("test_a", spec.test_a, r, a, Domain::Source, &mut rng.child(3)),
        test_b: split("test_b", spec.test_b, r, b, Domain::Target, &mut rng.child(4)),
    })
}
