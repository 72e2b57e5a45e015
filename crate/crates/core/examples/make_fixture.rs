//! Writes the 10-question fixture used by the integration tests and the CLI
//! walk-through: dataset, object files, vocabulary, base scores, word
//! vectors and image-search results.
//!
//! Usage: `cargo run -p kvqa-core --example make_fixture -- <out_dir>`
//!
//! The textual knowledge (`wikipedia.json`, `conceptnet.json`) and
//! `config.toml` are written by hand and are left alone.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use kvqa_core::candidates::{top_k_candidates, AnswerVocabulary};
use kvqa_core::pipeline::{DatasetFile, QAInstance};
use kvqa_core::query::{DetectedObject, ObjectsFile};
use kvqa_core::retrieval::{qa_to_statement, FixtureImages, ImageResult, RuleConverter};
use kvqa_core::text::hash_unit_vector;
use serde_json::json;

const VISUAL_DIM: usize = 16;
const WORD_DIM: usize = 50;

struct Question {
    id: u64,
    image: u64,
    text: &'static str,
    annotations: [&'static str; 5],
    objects: &'static [(&'static str, &'static [&'static str])],
    scores: &'static [(&'static str, f64)],
}

const QUESTIONS: &[Question] = &[
    Question {
        id: 1001,
        image: 501,
        text: "Which movie features a man telling his life story to strangers?",
        annotations: [
            "forrest gump",
            "forrest gump",
            "forrest gump",
            "big",
            "forrest gump",
        ],
        objects: &[
            ("man", &["sitting", "smiling"]),
            ("bench", &["wooden"]),
            ("box", &["white"]),
        ],
        scores: &[
            ("cast away", 0.82),
            ("forrest gump", 0.64),
            ("big", 0.41),
            ("titanic", 0.30),
            ("toy story", 0.22),
            ("the terminal", 0.15),
            ("philadelphia", 0.12),
            ("apollo 13", 0.08),
            ("splash", 0.05),
            ("jaws", 0.03),
        ],
    },
    Question {
        id: 1002,
        image: 502,
        text: "What sport can you use this racket for?",
        annotations: ["tennis", "tennis", "badminton", "tennis", "tennis"],
        objects: &[
            ("racket", &["red"]),
            ("ball", &["yellow", "fuzzy"]),
            ("person", &["running"]),
        ],
        scores: &[
            ("tennis", 0.70),
            ("badminton", 0.55),
            ("squash", 0.40),
            ("baseball", 0.20),
            ("ping pong", 0.15),
            ("golf", 0.10),
            ("soccer", 0.08),
            ("hockey", 0.05),
            ("frisbee", 0.03),
            ("volleyball", 0.02),
        ],
    },
    Question {
        id: 1003,
        image: 503,
        text: "What breed is this dog?",
        annotations: [
            "labrador",
            "golden retriever",
            "labrador",
            "golden retriever",
            "labrador",
        ],
        objects: &[("dog", &["yellow", "sitting"]), ("grass", &["green"])],
        scores: &[
            ("beagle", 0.66),
            ("golden retriever", 0.60),
            ("labrador", 0.58),
            ("poodle", 0.20),
            ("husky", 0.15),
            ("pug", 0.10),
            ("boxer", 0.08),
            ("collie", 0.06),
            ("terrier", 0.04),
            ("dalmatian", 0.02),
        ],
    },
    Question {
        id: 1004,
        image: 504,
        text: "What drink is made from this fruit?",
        annotations: ["wine", "wine", "juice", "wine", "wine"],
        objects: &[("grapes", &["purple", "ripe"]), ("vine", &["green"])],
        scores: &[
            ("juice", 0.75),
            ("wine", 0.60),
            ("jelly", 0.30),
            ("raisins", 0.25),
            ("smoothie", 0.12),
            ("beer", 0.10),
            ("water", 0.08),
            ("coffee", 0.05),
            ("tea", 0.04),
            ("milk", 0.02),
        ],
    },
    Question {
        id: 1005,
        image: 505,
        text: "In which city is this tower located?",
        annotations: ["paris", "paris", "paris", "paris", "paris"],
        objects: &[("tower", &["tall", "metal"]), ("sky", &["blue"])],
        scores: &[
            ("paris", 0.80),
            ("london", 0.40),
            ("new york", 0.30),
            ("rome", 0.20),
            ("tokyo", 0.15),
            ("berlin", 0.10),
            ("dubai", 0.08),
            ("seattle", 0.05),
            ("pisa", 0.04),
            ("las vegas", 0.02),
        ],
    },
    Question {
        id: 1006,
        image: 506,
        text: "What is the man riding on the wave?",
        annotations: ["surfboard", "surfboard", "board", "surfboard", "surfboard"],
        objects: &[
            ("man", &["standing", "wet"]),
            ("wave", &["large"]),
            ("surfboard", &["white"]),
        ],
        scores: &[
            ("surfboard", 0.66),
            ("boat", 0.50),
            ("board", 0.45),
            ("jet ski", 0.30),
            ("kayak", 0.20),
            ("skateboard", 0.10),
            ("raft", 0.08),
            ("canoe", 0.05),
            ("paddle", 0.03),
            ("sail", 0.02),
        ],
    },
    Question {
        id: 1007,
        image: 507,
        text: "What do these animals eat?",
        annotations: ["hay", "grass", "hay", "grass", "hay"],
        objects: &[("horse", &["brown"]), ("fence", &["wooden"])],
        scores: &[
            ("oats", 0.72),
            ("grass", 0.70),
            ("hay", 0.65),
            ("carrots", 0.30),
            ("apples", 0.20),
            ("corn", 0.10),
            ("wheat", 0.08),
            ("straw", 0.05),
            ("seeds", 0.03),
            ("leaves", 0.02),
        ],
    },
    Question {
        id: 1008,
        image: 508,
        text: "What season is shown in this picture?",
        annotations: ["winter", "winter", "winter", "winter", "winter"],
        objects: &[
            ("snow", &["white"]),
            ("tree", &["bare"]),
            ("person", &["skiing"]),
        ],
        scores: &[
            ("winter", 0.90),
            ("fall", 0.30),
            ("spring", 0.20),
            ("summer", 0.15),
            ("autumn", 0.12),
            ("christmas", 0.10),
            ("cold", 0.08),
            ("snowy", 0.05),
            ("december", 0.03),
            ("night", 0.02),
        ],
    },
    Question {
        id: 1009,
        image: 509,
        text: "How many wheels does this vehicle have?",
        annotations: ["2", "2", "2", "3", "2"],
        objects: &[("motorcycle", &["black", "parked"]), ("road", &["paved"])],
        scores: &[
            ("2", 0.70),
            ("4", 0.60),
            ("3", 0.30),
            ("1", 0.20),
            ("6", 0.10),
            ("5", 0.08),
            ("8", 0.05),
            ("0", 0.03),
            ("10", 0.02),
            ("18", 0.01),
        ],
    },
    Question {
        id: 1010,
        image: 510,
        text: "What company makes this computer?",
        annotations: ["apple", "apple", "dell", "apple", "apple"],
        objects: &[
            ("laptop", &["silver", "open"]),
            ("desk", &["wooden"]),
            ("cup", &["white"]),
        ],
        scores: &[
            ("dell", 0.68),
            ("apple", 0.62),
            ("hp", 0.40),
            ("microsoft", 0.30),
            ("lenovo", 0.20),
            ("sony", 0.15),
            ("samsung", 0.10),
            ("ibm", 0.08),
            ("toshiba", 0.05),
            ("asus", 0.03),
        ],
    },
];

/// Words that should sit close together in the word-vector table.
const SYNONYMS: &[&[&str]] = &[
    &["movie", "movies", "film", "films"],
    &["man", "men", "person", "people", "guy"],
    &["racket", "racquet", "rackets"],
    &["sport", "sports", "game"],
    &["dog", "dogs", "puppy"],
    &["fruit", "fruits", "grapes", "grape"],
    &["drink", "drinks", "beverage"],
    &["city", "cities", "town"],
    &["tower", "towers"],
    &["wave", "waves", "surf", "surfing"],
    &["animals", "animal", "horse", "horses"],
    &["season", "seasons"],
    &["picture", "photo", "image"],
    &["snow", "snowy"],
    &["vehicle", "vehicles", "motorcycle", "motorbike"],
    &["wheels", "wheel"],
    &["computer", "computers", "laptop", "laptops"],
    &["company", "companies", "brand"],
];

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn word_vectors() -> BTreeMap<String, Vec<f64>> {
    let mut out = BTreeMap::new();
    for group in SYNONYMS {
        let base = hash_unit_vector(group[0], WORD_DIM, 1);
        for w in *group {
            let noise = hash_unit_vector(w, WORD_DIM, 2);
            out.insert(
                w.to_string(),
                unit(base.iter().zip(&noise).map(|(b, n)| b + 0.3 * n).collect()),
            );
        }
    }
    out
}

/// Feature of an object with `label`, varied slightly by `salt`.
fn object_feature(label: &str, salt: &str) -> Vec<f64> {
    let base = hash_unit_vector(label, VISUAL_DIM, 3);
    let noise = hash_unit_vector(salt, VISUAL_DIM, 4);
    base.iter().zip(&noise).map(|(b, n)| b + 0.1 * n).collect()
}

fn write_json(path: &Path, value: &impl serde::Serialize) {
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    let mut text = serde_json::to_string_pretty(value).unwrap();
    text.push('\n');
    std::fs::write(path, text).unwrap();
}

fn main() {
    let out = PathBuf::from(
        std::env::args()
            .nth(1)
            .unwrap_or_else(|| "fixtures/mini".into()),
    );
    std::fs::create_dir_all(&out).unwrap();

    let mut answers: Vec<String> = Vec::new();
    for q in QUESTIONS {
        for (a, _) in q.scores {
            if !answers.iter().any(|x| x == a) {
                answers.push(a.to_string());
            }
        }
    }
    std::fs::write(out.join("vocabulary.txt"), answers.join("\n") + "\n").unwrap();
    let vocab = AnswerVocabulary::new(answers).unwrap();

    let mut scores = String::new();
    let mut dataset = DatasetFile::default();
    let images = FixtureImages::new(out.join("images"));
    if out.join("images").exists() {
        std::fs::remove_dir_all(out.join("images")).unwrap();
    }
    for q in QUESTIONS {
        let map: BTreeMap<&str, f64> = q.scores.iter().copied().collect();
        scores.push_str(
            &serde_json::to_string(&json!({"question_id": q.id, "scores": map})).unwrap(),
        );
        scores.push('\n');

        let objects = ObjectsFile {
            image_id: q.image.to_string(),
            objects: q
                .objects
                .iter()
                .enumerate()
                .map(|(i, (label, attrs))| DetectedObject {
                    object_id: i as u32 + 1,
                    label: label.to_string(),
                    attributes: attrs.iter().map(|a| a.to_string()).collect(),
                    r#box: [0.1 * i as f64, 0.1, 0.1 * i as f64 + 0.4, 0.8],
                    feature: object_feature(label, &format!("{}/{i}", q.image)),
                })
                .collect(),
        };
        let objects_file = PathBuf::from(format!("objects/{}.json", q.image));
        write_json(&out.join(&objects_file), &objects);

        dataset.questions.push(QAInstance {
            question_id: q.id.to_string(),
            question: q.text.to_string(),
            image_id: q.image.to_string(),
            annotations: q.annotations.iter().map(|a| a.to_string()).collect(),
            objects_file,
            split: None,
            candidate_scores: Vec::new(),
        });

        // Image results for every candidate statement; the first candidate
        // of the first question gets more than the five that are kept.
        let mut dense = vec![0.0; vocab.len()];
        for (a, s) in q.scores {
            dense[vocab.position(a).unwrap()] = *s;
        }
        for (rank, cand) in top_k_candidates(&dense, &vocab, 5)
            .unwrap()
            .iter()
            .enumerate()
        {
            let st =
                qa_to_statement(&q.id.to_string(), q.text, &cand.answer, &RuleConverter).unwrap();
            let dir = images.dir_for(&st.text);
            let count = if q.id == 1001 && rank == 0 {
                8
            } else {
                2 + (rank % 2)
            };
            for i in 1..=count {
                let result = ImageResult {
                    url: format!(
                        "https://images.example/{}/{}/{i}.jpg",
                        q.id,
                        cand.answer.replace(' ', "_")
                    ),
                    objects: (0..2)
                        .map(|o| object_feature(&cand.answer, &format!("{}/{i}/{o}", q.id)))
                        .collect(),
                };
                write_json(&dir.join(format!("{i}.json")), &result);
            }
        }
    }
    std::fs::write(out.join("scores.jsonl"), scores).unwrap();
    write_json(&out.join("dataset.json"), &dataset);

    let mut vectors = String::new();
    for (w, v) in word_vectors() {
        vectors.push_str(&w);
        for x in v {
            vectors.push_str(&format!(" {x:.6}"));
        }
        vectors.push('\n');
    }
    std::fs::write(out.join("vectors.txt"), vectors).unwrap();
    println!("fixture written to {}", out.display());
}
