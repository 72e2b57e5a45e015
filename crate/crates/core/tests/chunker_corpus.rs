use kvqa_core::query::{extract_noun_phrases, RuleChunker};

// (question, target, target head, question phrases)
const CORPUS: &[(&str, &str, &str, &[&str])] = &[
    (
        "Which movie features a man telling his life story to strangers?",
        "which movie",
        "movie",
        &["a man", "his life story", "strangers"],
    ),
    (
        "What sport can you use this racket for?",
        "what sport",
        "sport",
        &["this racket"],
    ),
    (
        "What breed is this dog?",
        "what breed",
        "breed",
        &["this dog"],
    ),
    (
        "What drink is made from this fruit?",
        "what drink",
        "drink",
        &["this fruit"],
    ),
    (
        "In which city is this tower located?",
        "which city",
        "city",
        &["this tower"],
    ),
    (
        "What is the man riding on the wave?",
        "what",
        "what",
        &["the man", "the wave"],
    ),
    (
        "What do these animals eat?",
        "what",
        "what",
        &["these animals"],
    ),
    (
        "What season is shown in this picture?",
        "what season",
        "season",
        &["this picture"],
    ),
    (
        "How many wheels does this vehicle have?",
        "how many wheels",
        "wheels",
        &["this vehicle"],
    ),
    (
        "What company makes this computer?",
        "what company",
        "company",
        &["this computer"],
    ),
    (
        "What color is the fire hydrant?",
        "what color",
        "color",
        &["the fire hydrant"],
    ),
    (
        "Which country does this flag belong to?",
        "which country",
        "country",
        &["this flag"],
    ),
    (
        "What is the woman holding in her hand?",
        "what",
        "what",
        &["the woman", "her hand"],
    ),
    (
        "Where would you find this kind of bird?",
        "where",
        "where",
        &["this kind of bird"],
    ),
    (
        "Who invented the device on the table?",
        "who",
        "who",
        &["the device on the table"],
    ),
    (
        "What type of food is on the plate?",
        "what type of food",
        "type",
        &["the plate"],
    ),
    (
        "Why is the boy wearing a helmet?",
        "why",
        "why",
        &["the boy", "a helmet"],
    ),
    (
        "What game are the children playing in the park?",
        "what game",
        "game",
        &["the children", "the park"],
    ),
    (
        "How old is the building behind the bus?",
        "how old",
        "old",
        &["the building behind the bus"],
    ),
    (
        "Which animal in the picture can fly?",
        "which animal in the picture",
        "animal",
        &[],
    ),
];

#[test]
fn hand_labeled_questions() {
    let mut mismatches = Vec::new();
    for (question, target, head, phrases) in CORPUS {
        let out = extract_noun_phrases(question, &["x".to_string()], &RuleChunker).unwrap();
        let got: Vec<&str> = out
            .question_phrases
            .iter()
            .map(|p| p.text.as_str())
            .collect();
        if out.target.text != *target || out.target.head != *head || got != *phrases {
            mismatches.push(format!(
                "{question}: target {:?}/{:?}, phrases {got:?}",
                out.target.text, out.target.head
            ));
        }
    }
    assert_eq!(CORPUS.len(), 20);
    assert!(mismatches.is_empty(), "{mismatches:#?}");
}

#[test]
fn attached_phrases_keep_the_first_head() {
    for (question, text, head) in [
        (
            "Where would you find this kind of bird?",
            "this kind of bird",
            "kind",
        ),
        (
            "Who invented the device on the table?",
            "the device on the table",
            "device",
        ),
        (
            "How old is the building behind the bus?",
            "the building behind the bus",
            "building",
        ),
    ] {
        let out = extract_noun_phrases(question, &["x".to_string()], &RuleChunker).unwrap();
        let p = out
            .question_phrases
            .iter()
            .find(|p| p.text == text)
            .unwrap();
        assert_eq!(p.head, head);
        assert!(p.head_is_noun);
    }
}

#[test]
fn phrase_indices_and_spans() {
    for (question, ..) in CORPUS {
        let out = extract_noun_phrases(question, &["red apple".to_string()], &RuleChunker).unwrap();
        assert_eq!(out.target.index, 0);
        for (i, p) in out.question_phrases.iter().enumerate() {
            assert_eq!(p.index, i + 1);
            assert!(p.span.start >= out.target.span.end || p.span.end <= out.target.span.start);
            let toks = kvqa_core::text::words(question);
            assert_eq!(toks[p.span.clone()].join(" "), p.text);
        }
        assert_eq!(out.answer_phrases[0].head, "apple");
    }
}
