//! Template sentences with known sentiment and category.
//!
//! Every generated sentence carries its oracle answer, so simulated
//! validators can be scored against the truth and simulated crafters know
//! whether a sentence really fools the model.

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::classifier::{tokenize, SentimentLabel, SentimentModel};

pub const SUBTLE: &str = "Subtle Sentiment Cues";
pub const MIXED: &str = "Mixed-sentiment";
pub const QUESTIONS: &str = "Questions";
pub const OTHERS: &str = "Others";

/// Categories the simulator crafts for, in round-robin order.
pub const TARGET_CATEGORIES: [&str; 4] = [SUBTLE, MIXED, QUESTIONS, OTHERS];

const NOUNS: &[&str] = &[
    "food", "movie", "service", "plot", "hotel", "camera", "battery", "staff", "book", "app", "room", "phone", "show",
    "meal",
];
const POSITIVE: &[&str] = &[
    "excellent",
    "great",
    "wonderful",
    "good",
    "impressive",
    "pleasant",
    "fantastic",
    "lovely",
    "solid",
    "amazing",
    "delightful",
    "brilliant",
];
const NEGATIVE: &[&str] = &[
    "terrible",
    "awful",
    "bad",
    "poor",
    "disappointing",
    "boring",
    "horrible",
    "weak",
    "dull",
    "mediocre",
    "broken",
    "annoying",
];
const DAYS: &[&str] = &["monday", "tuesday", "friday", "sunday"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Noun,
    /// Positive or negative adjective; its polarity drives the truth.
    Adjective,
    Day,
}

impl Slot {
    fn len(self) -> usize {
        match self {
            Slot::Noun => NOUNS.len(),
            Slot::Adjective => POSITIVE.len() + NEGATIVE.len(),
            Slot::Day => DAYS.len(),
        }
    }

    fn word(self, i: usize) -> &'static str {
        match self {
            Slot::Noun => NOUNS[i],
            Slot::Adjective if i < POSITIVE.len() => POSITIVE[i],
            Slot::Adjective => NEGATIVE[i - POSITIVE.len()],
            Slot::Day => DAYS[i],
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Truth {
    Fixed(SentimentLabel),
    Follow(usize),
    Negate(usize),
}

struct Template {
    category: &'static str,
    /// `{}` placeholders are filled from `slots` in order.
    pattern: &'static str,
    slots: &'static [Slot],
    truth: Truth,
}

use Slot::*;

const TEMPLATES: &[Template] = &[
    Template {
        category: SUBTLE,
        pattern: "I would not call the {} {} at all",
        slots: &[Noun, Adjective],
        truth: Truth::Negate(1),
    },
    Template {
        category: SUBTLE,
        pattern: "I expected the {} to be {} but it was not",
        slots: &[Noun, Adjective],
        truth: Truth::Negate(1),
    },
    Template {
        category: SUBTLE,
        pattern: "The {} was anything but {} this time",
        slots: &[Noun, Adjective],
        truth: Truth::Negate(1),
    },
    Template {
        category: SUBTLE,
        pattern: "Calling this {} {} would be generous",
        slots: &[Noun, Adjective],
        truth: Truth::Fixed(SentimentLabel::Negative),
    },
    Template {
        category: MIXED,
        pattern: "The {} was {} but the {} was {}",
        slots: &[Noun, Adjective, Noun, Adjective],
        truth: Truth::Follow(3),
    },
    Template {
        category: MIXED,
        pattern: "Although the {} is {} the {} is really {}",
        slots: &[Noun, Adjective, Noun, Adjective],
        truth: Truth::Follow(3),
    },
    Template {
        category: QUESTIONS,
        pattern: "Is the {} really as {} as they say",
        slots: &[Noun, Adjective],
        truth: Truth::Fixed(SentimentLabel::Neutral),
    },
    Template {
        category: QUESTIONS,
        pattern: "Would you say the {} was {} on {}",
        slots: &[Noun, Adjective, Day],
        truth: Truth::Fixed(SentimentLabel::Neutral),
    },
    Template {
        category: OTHERS,
        pattern: "Oh {} the {} stopped working again on {}",
        slots: &[Adjective, Noun, Day],
        truth: Truth::Fixed(SentimentLabel::Negative),
    },
    Template {
        category: OTHERS,
        pattern: "The {} was so {} that I forgot the time",
        slots: &[Noun, Adjective],
        truth: Truth::Follow(1),
    },
];

/// Plain statements the model usually gets right.
const PLAIN: Template = Template {
    category: OTHERS,
    pattern: "I thought the {} was really {}",
    slots: &[Noun, Adjective],
    truth: Truth::Follow(1),
};

fn polarity(adjective: usize) -> SentimentLabel {
    if adjective < POSITIVE.len() {
        SentimentLabel::Positive
    } else {
        SentimentLabel::Negative
    }
}

fn negate(label: SentimentLabel) -> SentimentLabel {
    match label {
        SentimentLabel::Positive => SentimentLabel::Negative,
        SentimentLabel::Negative => SentimentLabel::Positive,
        SentimentLabel::Neutral => SentimentLabel::Neutral,
    }
}

/// `usize::MAX` names the plain template.
const PLAIN_ID: usize = usize::MAX;

fn template(id: usize) -> &'static Template {
    if id == PLAIN_ID {
        &PLAIN
    } else {
        &TEMPLATES[id]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    template: usize,
    fillers: Vec<usize>,
    pub text: String,
    pub truth: SentimentLabel,
    pub category: &'static str,
}

impl Sentence {
    fn build(template_id: usize, fillers: Vec<usize>) -> Self {
        let t = template(template_id);
        let mut text = String::new();
        let mut parts = t.pattern.split("{}");
        text.push_str(parts.next().unwrap_or_default());
        for (kind, &f) in t.slots.iter().zip(&fillers) {
            text.push_str(kind.word(f));
            text.push_str(parts.next().unwrap_or_default());
        }
        let truth = match t.truth {
            Truth::Fixed(l) => l,
            Truth::Follow(i) => polarity(fillers[i]),
            Truth::Negate(i) => negate(polarity(fillers[i])),
        };
        Sentence {
            template: template_id,
            fillers,
            text,
            truth,
            category: t.category,
        }
    }

    fn random(template_id: usize, rng: &mut impl Rng) -> Self {
        let fillers = template(template_id)
            .slots
            .iter()
            .map(|s| rng.random_range(0..s.len()))
            .collect();
        Sentence::build(template_id, fillers)
    }

    pub fn slot_count(&self) -> usize {
        self.fillers.len()
    }

    /// Slot whose filler is `word`, if any.
    pub fn slot_of(&self, word: &str) -> Option<usize> {
        let slots = template(self.template).slots;
        slots
            .iter()
            .zip(&self.fillers)
            .position(|(s, &f)| s.word(f).eq_ignore_ascii_case(word))
    }

    /// Same sentence with a different filler in `slot`.
    pub fn perturb(&self, slot: usize, rng: &mut impl Rng) -> Sentence {
        let kind = template(self.template).slots[slot];
        let current = self.fillers[slot];
        let mut next = rng.random_range(0..kind.len() - 1);
        if next >= current {
            next += 1;
        }
        let mut fillers = self.fillers.clone();
        fillers[slot] = next;
        Sentence::build(self.template, fillers)
    }

    pub fn fools(&self, model: &dyn SentimentModel) -> bool {
        model.predict(&self.text).label != self.truth
    }
}

/// A fixed pool of sentences, split by whether they fool the model.
#[derive(Debug, Clone)]
pub struct SentenceBank {
    pub failing: Vec<Sentence>,
    pub passing: Vec<Sentence>,
}

impl SentenceBank {
    /// Draws `per_template` sentences per template and classifies them.
    pub fn build(model: &dyn SentimentModel, per_template: usize, rng: &mut impl Rng) -> Self {
        let mut failing = Vec::new();
        let mut passing = Vec::new();
        let ids = (0..TEMPLATES.len()).chain(std::iter::once(PLAIN_ID));
        for id in ids {
            for _ in 0..per_template {
                let s = Sentence::random(id, rng);
                debug_assert!(tokenize(&s.text).word_count() >= 5);
                if failing.contains(&s) || passing.contains(&s) {
                    continue;
                }
                if s.fools(model) {
                    failing.push(s);
                } else {
                    passing.push(s);
                }
            }
        }
        SentenceBank { failing, passing }
    }

    pub fn random_draft(&self, category: &str, rng: &mut impl Rng) -> Sentence {
        let ids: Vec<usize> = (0..TEMPLATES.len())
            .filter(|&i| TEMPLATES[i].category == category)
            .collect();
        let id = *ids.choose(rng).unwrap_or(&PLAIN_ID);
        Sentence::random(id, rng)
    }

    pub fn find(&self, text: &str) -> Option<&Sentence> {
        self.failing.iter().chain(&self.passing).find(|s| s.text == text)
    }

    pub fn failing_in(&self, category: &str) -> Vec<&Sentence> {
        self.failing.iter().filter(|s| s.category == category).collect()
    }
}

/// Nonsense strings used as gold questions that must be flagged.
pub const NONSENSE: &[&str] = &[
    "blue the of sideways quickly table eleven",
    "asdf qwer zxcv uiop hjkl vbnm",
    "purple running the because sandwich upward",
    "lorem ipsum dolor sit amet consectetur",
    "seven window ate loudly underneath seven",
];
