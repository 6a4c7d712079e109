//! Seeded synthetic review corpora.
//!
//! Every product has a dominant sentiment class. Each review takes the
//! dominant class with probability `product_bias` and one of the two other
//! classes otherwise. Its text mixes words from the class lexicon with
//! class-neutral filler; an `ambiguous_fraction` of reviews use filler only,
//! so only the product's history can resolve them.

use std::collections::HashMap;

use chrono::{Days, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ingest::{Review, SentimentClass};

pub const POSITIVE_WORDS: &[&str] = &[
    "great", "excellent", "love", "perfect", "amazing", "wonderful", "fantastic", "happy",
    "recommend", "best", "awesome", "superb", "delighted", "brilliant", "pleased", "flawless",
    "outstanding", "sturdy", "reliable", "enjoy",
];

pub const NEGATIVE_WORDS: &[&str] = &[
    "terrible", "awful", "hate", "broken", "worst", "poor", "disappointed", "useless", "refund",
    "waste", "horrible", "cheap", "defective", "junk", "flimsy", "annoying", "regret", "failed",
    "returned", "garbage",
];

pub const NEUTRAL_WORDS: &[&str] = &[
    "okay", "average", "decent", "fine", "mediocre", "acceptable", "ordinary", "adequate",
    "moderate", "fair", "middling", "passable", "standard", "typical", "reasonable", "plain",
    "usual", "mixed", "expected", "meh",
];

pub const FILLER_WORDS: &[&str] = &[
    "the", "this", "product", "it", "was", "i", "bought", "for", "my", "and", "a", "with", "to",
    "of", "arrived", "box", "after", "week", "using", "item", "ordered", "package", "color",
    "size", "came", "in", "on", "daughter", "son", "kitchen", "office", "wife", "husband", "gift",
    "price", "shipping", "today", "month", "use", "twice", "so", "far", "have", "had", "is",
    "one", "our", "home", "second", "time",
];

pub fn lexicon(class: SentimentClass) -> &'static [&'static str] {
    match class {
        SentimentClass::Negative => NEGATIVE_WORDS,
        SentimentClass::Neutral => NEUTRAL_WORDS,
        SentimentClass::Positive => POSITIVE_WORDS,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub reviews: usize,
    pub products: usize,
    /// Probability that a review carries its product's dominant class.
    pub product_bias: f64,
    /// Probability that a product's dominant class is negative / neutral / positive.
    pub dominant_mix: [f64; 3],
    /// Probability of drawing each token of a signal-bearing review from its class lexicon.
    pub signal_fraction: f64,
    /// Fraction of reviews whose text is filler only.
    pub ambiguous_fraction: f64,
    pub min_words: usize,
    pub max_words: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            reviews: 2000,
            products: 50,
            product_bias: 0.8,
            dominant_mix: [0.4, 0.2, 0.4],
            signal_fraction: 0.4,
            ambiguous_fraction: 0.0,
            min_words: 10,
            max_words: 20,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub config: SynthConfig,
    pub reviews: Vec<Review>,
    /// Dominant class of every product.
    pub dominant: HashMap<String, SentimentClass>,
    /// `ambiguous[i]` is true when review `i` has filler-only text.
    pub ambiguous: Vec<bool>,
}

impl SynthCorpus {
    /// Generating distribution `P(class | product)`.
    pub fn class_distribution(&self, product_id: &str) -> [f64; 3] {
        let dom = self.dominant[product_id];
        let mut p = [(1.0 - self.config.product_bias) / 2.0; 3];
        p[dom.index()] = self.config.product_bias;
        p
    }
}

fn sample_index<R: Rng>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

fn render(words: &[&str]) -> String {
    let mut text = words.join(" ");
    if let Some(first) = text.get(..1) {
        text.replace_range(..1, &first.to_uppercase());
    }
    text.push('.');
    text
}

pub fn generate(config: &SynthConfig) -> SynthCorpus {
    assert!(config.products > 0 && config.min_words > 0 && config.max_words >= config.min_words);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let products: Vec<String> = (0..config.products).map(|i| format!("P{i:05}")).collect();
    let dominant: HashMap<String, SentimentClass> = products
        .iter()
        .map(|p| {
            let c = SentimentClass::from_index(sample_index(&config.dominant_mix, &mut rng))
                .expect("three classes");
            (p.clone(), c)
        })
        .collect();

    let base = NaiveDate::from_ymd_opt(2010, 1, 1).expect("valid date");
    let mut next_day: HashMap<&str, u64> = HashMap::new();
    let mut reviews = Vec::with_capacity(config.reviews);
    let mut ambiguous = Vec::with_capacity(config.reviews);
    for i in 0..config.reviews {
        // round-robin keeps products balanced; the order is shuffled below
        let pid = &products[i % products.len()];
        let dom = dominant[pid];
        let class = if rng.gen::<f64>() < config.product_bias {
            dom
        } else {
            let others: Vec<SentimentClass> =
                SentimentClass::ALL.into_iter().filter(|c| *c != dom).collect();
            *others.choose(&mut rng).expect("two other classes")
        };
        let rating = match class {
            SentimentClass::Negative => rng.gen_range(1..=2),
            SentimentClass::Neutral => 3,
            SentimentClass::Positive => rng.gen_range(4..=5),
        };
        let is_ambiguous = rng.gen::<f64>() < config.ambiguous_fraction;
        let len = rng.gen_range(config.min_words..=config.max_words);
        let lex = lexicon(class);
        let mut words: Vec<&str> = (0..len)
            .map(|_| {
                if !is_ambiguous && rng.gen::<f64>() < config.signal_fraction {
                    *lex.choose(&mut rng).expect("non-empty lexicon")
                } else {
                    *FILLER_WORDS.choose(&mut rng).expect("non-empty filler")
                }
            })
            .collect();
        if !is_ambiguous && !words.iter().any(|w| lex.contains(w)) {
            let slot = rng.gen_range(0..words.len());
            words[slot] = lex.choose(&mut rng).expect("non-empty lexicon");
        }

        let day = next_day.entry(pid.as_str()).or_insert(0);
        *day += rng.gen_range(1..30);
        let date = base.checked_add_days(Days::new(*day)).expect("date in range");
        let review_time = date.format("%Y%m%d").to_string().parse().expect("digits");

        reviews.push(Review {
            rating,
            product_id: pid.clone(),
            reviewer_id: format!("U{:06}", rng.gen_range(0..1_000_000)),
            helpfulness: (0, 0),
            title: String::new(),
            review_time,
            review_text: render(&words),
        });
        ambiguous.push(is_ambiguous);
    }

    let mut order: Vec<usize> = (0..reviews.len()).collect();
    order.shuffle(&mut rng);
    let reviews = order.iter().map(|&i| reviews[i].clone()).collect();
    let ambiguous = order.iter().map(|&i| ambiguous[i]).collect();
    SynthCorpus { config: config.clone(), reviews, dominant, ambiguous }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::preprocess;

    #[test]
    fn deterministic_and_well_formed() {
        let cfg = SynthConfig { reviews: 300, products: 10, ambiguous_fraction: 0.3, ..Default::default() };
        let a = generate(&cfg);
        let b = generate(&cfg);
        assert_eq!(a.reviews, b.reviews);
        assert_eq!(a.reviews.len(), 300);
        for (r, &amb) in a.reviews.iter().zip(&a.ambiguous) {
            let toks = preprocess(&r.review_text);
            let lex = lexicon(r.sentiment());
            let signal = toks.iter().filter(|t| lex.contains(t)).count();
            if amb {
                assert!(toks.iter().all(|t| FILLER_WORDS.contains(&t) || t == "."));
            } else {
                assert!(signal > 0);
            }
            assert!(r.date() > NaiveDate::from_ymd_opt(2009, 12, 31).unwrap());
        }
        let amb = a.ambiguous.iter().filter(|&&x| x).count() as f64 / 300.0;
        assert!((amb - 0.3).abs() < 0.08, "{amb}");
    }

    #[test]
    fn lexicons_are_disjoint() {
        let all = [POSITIVE_WORDS, NEGATIVE_WORDS, NEUTRAL_WORDS, FILLER_WORDS];
        for (i, a) in all.iter().enumerate() {
            for b in &all[i + 1..] {
                assert!(a.iter().all(|w| !b.contains(w)));
            }
        }
    }
}
