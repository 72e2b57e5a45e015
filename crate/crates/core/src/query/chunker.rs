//! Rule-based noun-phrase chunking over a small closed-class lexicon.
//!
//! Open-class words are treated as nominal (adjectives included), so a noun
//! group is a maximal run of determiners, quantifiers, participial modifiers
//! and open-class words. Verbs are recognised from a list of common verbs plus
//! `-ing`/`-ed` participles that are not directly followed by a nominal.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::text::Token;

const WH_WORDS: &[&str] = &[
    "what", "which", "who", "whom", "whose", "where", "when", "why", "how",
];

const DETERMINERS: &[&str] = &[
    "a", "an", "the", "this", "that", "these", "those", "my", "your", "his", "her", "its", "our",
    "their", "some", "any", "each", "every", "no", "another", "both", "all", "either", "neither",
    "such",
];

const QUANTIFIERS: &[&str] = &["many", "much", "few", "several", "more", "most", "other"];

// Degree words that form "how X" targets.
const HOW_MODIFIERS: &[&str] = &[
    "old", "long", "tall", "big", "fast", "far", "heavy", "hot", "cold", "high", "large", "deep",
    "wide", "small",
];

const PREPOSITIONS: &[&str] = &[
    "in", "on", "at", "of", "to", "for", "with", "by", "from", "about", "into", "onto", "over",
    "under", "near", "behind", "above", "below", "between", "inside", "outside", "through",
    "during", "before", "after", "like", "than", "as", "across", "along", "around", "beside",
    "against", "without", "toward", "towards", "upon", "within", "off", "up", "down", "out",
];

// Prepositions whose phrase is attached to the preceding noun group.
const ATTACHING_PREPOSITIONS: &[&str] = &[
    "of", "in", "on", "at", "with", "near", "under", "behind", "above", "below", "inside",
    "beside", "between", "over",
];

const PRONOUNS: &[&str] = &[
    "i",
    "you",
    "he",
    "she",
    "it",
    "we",
    "they",
    "me",
    "him",
    "us",
    "them",
    "there",
    "here",
    "someone",
    "something",
    "anything",
    "anyone",
    "everyone",
    "everything",
    "nothing",
    "one",
    "ones",
    "itself",
    "himself",
    "herself",
    "themselves",
    "yourself",
];

const CONJUNCTIONS: &[&str] = &[
    "and", "or", "but", "nor", "so", "if", "because", "while", "whether", "then", "also",
];

const ADVERBS: &[&str] = &[
    "not",
    "very",
    "too",
    "just",
    "now",
    "usually",
    "often",
    "typically",
    "likely",
    "really",
    "ever",
    "never",
    "always",
    "probably",
    "likely",
    "mostly",
    "commonly",
    "generally",
    "best",
    "well",
    "still",
    "again",
    "only",
    "n",
    "t",
];

const VERBS: &[&str] = &[
    "is",
    "are",
    "was",
    "were",
    "be",
    "been",
    "being",
    "am",
    "do",
    "does",
    "did",
    "done",
    "have",
    "has",
    "had",
    "can",
    "could",
    "will",
    "would",
    "should",
    "shall",
    "may",
    "might",
    "must",
    "s",
    "make",
    "makes",
    "made",
    "use",
    "uses",
    "used",
    "eat",
    "eats",
    "ate",
    "eaten",
    "play",
    "plays",
    "played",
    "call",
    "called",
    "feature",
    "features",
    "featured",
    "tell",
    "tells",
    "told",
    "find",
    "finds",
    "found",
    "go",
    "goes",
    "went",
    "gone",
    "hold",
    "holds",
    "held",
    "wear",
    "wears",
    "wore",
    "worn",
    "keep",
    "keeps",
    "kept",
    "get",
    "gets",
    "got",
    "live",
    "lives",
    "lived",
    "grow",
    "grows",
    "grew",
    "grown",
    "come",
    "comes",
    "came",
    "take",
    "takes",
    "took",
    "taken",
    "see",
    "sees",
    "saw",
    "seen",
    "need",
    "needs",
    "require",
    "requires",
    "contain",
    "contains",
    "belong",
    "belongs",
    "mean",
    "means",
    "meant",
    "give",
    "gives",
    "gave",
    "given",
    "run",
    "runs",
    "ran",
    "fly",
    "flies",
    "flew",
    "show",
    "shows",
    "sell",
    "sells",
    "sold",
    "invent",
    "invented",
    "invents",
    "produce",
    "produces",
    "produced",
    "cook",
    "cooks",
    "hit",
    "hits",
    "ride",
    "rides",
    "rode",
    "drive",
    "drives",
    "drove",
    "build",
    "builds",
    "built",
    "say",
    "says",
    "said",
    "know",
    "known",
    "knows",
    "help",
    "helps",
    "cause",
    "causes",
    "kill",
    "kills",
    "catch",
    "catches",
    "caught",
    "bring",
    "brings",
    "brought",
    "put",
    "puts",
    "win",
    "wins",
    "won",
    "serve",
    "serves",
    "served",
    "pull",
    "pulls",
    "carry",
    "carries",
    "hunt",
    "hunts",
    "swim",
    "swims",
    "sit",
    "sits",
    "sat",
    "stand",
    "stands",
    "stood",
    "protect",
    "protects",
    "prevent",
    "prevents",
    "represent",
    "represents",
    "originate",
    "originated",
    "happen",
    "happens",
    "happened",
    "depict",
    "depicts",
    "depicted",
    "star",
    "stars",
    "starred",
    "shown",
    "drawn",
    "thrown",
    "written",
    "driven",
    "ridden",
    "hidden",
    "broken",
    "frozen",
    "chosen",
    "spoken",
    "stolen",
    "shot",
    "sewn",
    "blown",
];

// Nouns that look like participles.
const ING_ED_NOUNS: &[&str] = &[
    "clothing",
    "building",
    "ceiling",
    "painting",
    "wedding",
    "morning",
    "evening",
    "thing",
    "things",
    "king",
    "ring",
    "spring",
    "string",
    "wing",
    "swing",
    "ping",
    "sibling",
    "pudding",
    "icing",
    "frosting",
    "stuffing",
    "seasoning",
    "dressing",
    "topping",
    "toppings",
    "bedding",
    "hundred",
    "seed",
    "speed",
    "breed",
    "weed",
    "feed",
    "shed",
    "sled",
    "bed",
    "red",
];

fn contains(list: &[&str], w: &str) -> bool {
    list.contains(&w)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WordClass {
    Wh,
    Determiner,
    Quantifier,
    HowModifier,
    Preposition,
    Pronoun,
    Conjunction,
    Adverb,
    Verb,
    /// Participle directly followed by a nominal ("sitting man").
    Modifier,
    Nominal,
}

impl WordClass {
    fn continues_group(self) -> bool {
        matches!(
            self,
            WordClass::Quantifier | WordClass::Modifier | WordClass::Nominal
        )
    }
}

fn looks_participial(w: &str) -> bool {
    (w.len() > 4 && (w.ends_with("ing") || w.ends_with("ed"))) && !contains(ING_ED_NOUNS, w)
}

fn lexical_class(w: &str) -> Option<WordClass> {
    if contains(WH_WORDS, w) {
        Some(WordClass::Wh)
    } else if contains(DETERMINERS, w) {
        Some(WordClass::Determiner)
    } else if contains(QUANTIFIERS, w) {
        Some(WordClass::Quantifier)
    } else if contains(PREPOSITIONS, w) {
        Some(WordClass::Preposition)
    } else if contains(PRONOUNS, w) {
        Some(WordClass::Pronoun)
    } else if contains(CONJUNCTIONS, w) {
        Some(WordClass::Conjunction)
    } else if contains(ADVERBS, w) {
        Some(WordClass::Adverb)
    } else if contains(VERBS, w) {
        Some(WordClass::Verb)
    } else {
        None
    }
}

/// True for words that can never head a noun phrase.
pub fn is_closed_class(word: &str) -> bool {
    lexical_class(word).is_some() || contains(HOW_MODIFIERS, word)
}

/// Assigns a class to every token.
pub fn classify(tokens: &[Token]) -> Vec<WordClass> {
    let mut classes: Vec<Option<WordClass>> =
        tokens.iter().map(|t| lexical_class(&t.surface)).collect();
    for i in 0..tokens.len() {
        if classes[i].is_some() {
            continue;
        }
        let w = tokens[i].surface.as_str();
        // "how old", "how tall": degree word right after "how"
        if i > 0 && tokens[i - 1].surface == "how" && contains(HOW_MODIFIERS, w) {
            classes[i] = Some(WordClass::HowModifier);
            continue;
        }
        if looks_participial(w) {
            // "is telling stories", "man telling stories" are verbal
            let after_verbal_or_noun = i > 0
                && matches!(
                    classes[i - 1],
                    Some(WordClass::Verb | WordClass::Nominal | WordClass::Pronoun)
                );
            let next_nominal = tokens.get(i + 1).is_some_and(|n| {
                lexical_class(&n.surface).is_none() && !looks_participial(&n.surface)
            });
            classes[i] = Some(if next_nominal && !after_verbal_or_noun {
                WordClass::Modifier
            } else {
                WordClass::Verb
            });
            continue;
        }
        classes[i] = Some(WordClass::Nominal);
    }
    classes.into_iter().map(|c| c.unwrap()).collect()
}

/// A chunk over token indices; `head` is `None` when the chunk has no nominal.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub span: Range<usize>,
    pub head: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuestionChunks {
    /// The wh/how phrase, if the question has one.
    pub target: Option<Chunk>,
    pub phrases: Vec<Chunk>,
}

/// Splits questions and answers into noun phrases.
pub trait PhraseChunker: Send + Sync {
    fn chunk_question(&self, tokens: &[Token]) -> QuestionChunks;

    /// One phrase covering the whole answer.
    fn chunk_answer(&self, tokens: &[Token]) -> Chunk;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct RuleChunker;

impl RuleChunker {
    /// Core noun group starting at `i`: determiners then modifiers/nominals,
    /// ending at the last nominal. Returns (end, head).
    fn core_group(classes: &[WordClass], i: usize) -> Option<(usize, usize)> {
        let mut j = i;
        while j < classes.len() && classes[j] == WordClass::Determiner {
            j += 1;
        }
        let mut last_nominal = None;
        while j < classes.len() && classes[j].continues_group() {
            if classes[j] == WordClass::Nominal {
                last_nominal = Some(j);
            }
            j += 1;
        }
        last_nominal.map(|h| (h + 1, h))
    }

    /// Core group plus any attached prepositional phrases.
    fn noun_phrase(tokens: &[Token], classes: &[WordClass], i: usize) -> Option<Chunk> {
        let (mut end, head) = Self::core_group(classes, i)?;
        while end < tokens.len()
            && classes[end] == WordClass::Preposition
            && contains(ATTACHING_PREPOSITIONS, &tokens[end].surface)
        {
            match Self::core_group(classes, end + 1) {
                Some((e, _)) => end = e,
                None => break,
            }
        }
        Some(Chunk {
            span: i..end,
            head: Some(head),
        })
    }

    fn target(tokens: &[Token], classes: &[WordClass]) -> Option<Chunk> {
        let wh = classes.iter().position(|c| *c == WordClass::Wh)?;
        let mut j = wh + 1;
        // "how many", "how old"
        while j < classes.len()
            && matches!(classes[j], WordClass::Quantifier | WordClass::HowModifier)
        {
            j += 1;
        }
        if let Some(np) = Self::noun_phrase(tokens, classes, j) {
            if np.span.start == j {
                return Some(Chunk {
                    span: wh..np.span.end,
                    head: np.head,
                });
            }
        }
        Some(Chunk {
            span: wh..j,
            head: None,
        })
    }
}

impl PhraseChunker for RuleChunker {
    fn chunk_question(&self, tokens: &[Token]) -> QuestionChunks {
        let classes = classify(tokens);
        let target = Self::target(tokens, &classes);
        let mut phrases = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            if let Some(t) = &target {
                if t.span.contains(&i) {
                    i = t.span.end;
                    continue;
                }
            }
            let starts_group = matches!(
                classes[i],
                WordClass::Determiner
                    | WordClass::Quantifier
                    | WordClass::Modifier
                    | WordClass::Nominal
            );
            if starts_group {
                if let Some(np) = Self::noun_phrase(tokens, &classes, i) {
                    i = np.span.end;
                    phrases.push(np);
                    continue;
                }
            }
            i += 1;
        }
        QuestionChunks { target, phrases }
    }

    fn chunk_answer(&self, tokens: &[Token]) -> Chunk {
        let head = tokens
            .iter()
            .rposition(|t| !is_closed_class(&t.surface))
            .or_else(|| tokens.len().checked_sub(1));
        Chunk {
            span: 0..tokens.len(),
            head,
        }
    }
}
