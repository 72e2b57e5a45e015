use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use kvqa_core::query::{PhraseKind, SearchQuery};
use kvqa_core::retrieval::{
    build_textual_pool, Article, CachedClient, ConceptNetClient, FixtureWikipedia, KnowledgeClient,
    RelationTemplates, ResponseCache, Statement, TextSource, WikipediaClient,
};
use kvqa_core::text::{words, HashEncoder};
use kvqa_core::Error;
use proptest::prelude::*;

fn query(text: &str) -> SearchQuery {
    SearchQuery {
        text: text.into(),
        phrase_kind: PhraseKind::Question,
        phrase_index: 1,
        rank: 1,
    }
}

fn statement(text: &str) -> Statement {
    Statement {
        text: text.into(),
        question_id: "q".into(),
        answer: "x".into(),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

// Greedy f1 written out directly from the definition.
fn oracle_f1(sentence: &str, reference: &str, enc: &HashEncoder) -> f64 {
    let c: Vec<Vec<f64>> = words(sentence)
        .iter()
        .map(|w| enc.token_vector(w))
        .collect();
    let r: Vec<Vec<f64>> = words(reference)
        .iter()
        .map(|w| enc.token_vector(w))
        .collect();
    let cos = |a: &[f64], b: &[f64]| dot(a, b) / (dot(a, a).sqrt() * dot(b, b).sqrt());
    let p = c
        .iter()
        .map(|x| r.iter().map(|y| cos(x, y)).fold(-1.0, f64::max))
        .sum::<f64>()
        / c.len() as f64;
    let rc = r
        .iter()
        .map(|y| c.iter().map(|x| cos(x, y)).fold(-1.0, f64::max))
        .sum::<f64>()
        / r.len() as f64;
    if p + rc == 0.0 {
        0.0
    } else {
        (2.0 * p * rc / (p + rc)).clamp(0.0, 1.0)
    }
}

const VOCAB: &[&str] = &[
    "dog", "cat", "movie", "man", "story", "tennis", "racket", "ball", "court", "grass", "hay",
    "horse", "city", "tower", "paris", "wine", "grape", "fruit", "the", "a", "is", "plays", "eats",
    "near",
];

fn forty_sentences() -> Vec<String> {
    let mut out: Vec<String> = (0..38)
        .map(|i| {
            let n = 3 + i % 5;
            (0..n)
                .map(|j| VOCAB[(i * 7 + j * 3) % VOCAB.len()])
                .collect::<Vec<_>>()
                .join(" ")
                + "."
        })
        .collect();
    // a duplicate after normalization and an empty sentence
    out.push(out[4].to_uppercase());
    out.push("...".into());
    out
}

#[test]
fn pool_matches_exhaustive_oracle_on_forty_sentence_article() {
    let sentences = forty_sentences();
    assert_eq!(sentences.len(), 40);
    let mut map = BTreeMap::new();
    map.insert(
        "tennis".to_string(),
        vec![Article {
            id: "a1".into(),
            title: "Tennis".into(),
            sentences: sentences.clone(),
        }],
    );
    let client = FixtureWikipedia::new(map);
    let enc = HashEncoder::new(32, 5);
    let stmts = [
        statement("tennis is played with a racket"),
        statement("the horse eats hay near the tower"),
    ];
    let pool = build_textual_pool(
        &[query("tennis"), query("tennis")],
        &stmts,
        &[&client],
        &enc,
        15,
    )
    .unwrap();

    let usable: Vec<usize> = (0..40)
        .filter(|&i| !words(&sentences[i]).is_empty())
        .collect();
    let scores: Vec<Vec<f64>> = (0..40)
        .map(|i| {
            stmts
                .iter()
                .map(|s| {
                    if usable.contains(&i) {
                        oracle_f1(&sentences[i], &s.text, &enc)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let mut chosen = [false; 40];
    for j in 0..stmts.len() {
        let mut ranked = usable.clone();
        ranked.sort_by(|&a, &b| {
            scores[b][j]
                .partial_cmp(&scores[a][j])
                .unwrap()
                .then(a.cmp(&b))
        });
        for &i in ranked.iter().take(15) {
            chosen[i] = true;
        }
    }
    let mut expected: Vec<(String, f64)> = Vec::new();
    for i in (0..40).filter(|&i| chosen[i]) {
        let key = words(&sentences[i]).join(" ");
        let score = scores[i].iter().copied().fold(0.0, f64::max);
        match expected.iter_mut().find(|(k, _)| *k == key) {
            Some(e) => e.1 = e.1.max(score),
            None => expected.push((key, score)),
        }
    }
    assert_eq!(pool.sentences.len(), expected.len());
    for (s, (key, score)) in pool.sentences.iter().zip(&expected) {
        assert_eq!(&words(&s.text).join(" "), key);
        assert!(
            (s.match_score - score).abs() < 1e-12,
            "{} vs {score}",
            s.match_score
        );
        assert_eq!(s.source, TextSource::Wikipedia);
        assert_eq!(s.article_id, "a1");
    }
    // one fetch per distinct query, one selection per statement
    assert_eq!(pool.selections.len(), 2);
    assert!(pool.selections.iter().all(|s| s.selected == 15));
}

proptest! {
    #[test]
    fn per_article_cap_holds(lengths in prop::collection::vec(1usize..30, 1..4), cap in 1usize..20, n_stmts in 1usize..4) {
        let articles: Vec<Article> = lengths
            .iter()
            .enumerate()
            .map(|(a, &n)| Article {
                id: format!("a{a}"),
                title: "t".into(),
                sentences: (0..n).map(|i| format!("{} {} {}", VOCAB[(a + i) % VOCAB.len()], VOCAB[(i * 5) % VOCAB.len()], i)).collect(),
            })
            .collect();
        let mut map = BTreeMap::new();
        map.insert("q".to_string(), articles);
        let client = FixtureWikipedia::new(map);
        let stmts: Vec<Statement> = (0..n_stmts).map(|i| statement(&format!("{} plays {}", VOCAB[i], VOCAB[i + 3]))).collect();
        let pool = build_textual_pool(&[query("q")], &stmts, &[&client], &HashEncoder::new(16, 1), cap).unwrap();
        for sel in &pool.selections {
            prop_assert!(sel.selected <= cap);
        }
        for (a, &n) in lengths.iter().enumerate() {
            let kept = pool.sentences.iter().filter(|s| s.article_id == format!("a{a}")).count();
            prop_assert!(kept <= (cap * n_stmts).min(n));
        }
    }
}

/// Serves canned HTTP responses; `route` maps a request target to (status, body).
fn serve(
    route: impl Fn(&str) -> (u16, String) + Send + 'static,
) -> (String, Arc<Mutex<Vec<String>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { break };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut line = String::new();
            if reader.read_line(&mut line).is_err() {
                continue;
            }
            loop {
                let mut h = String::new();
                if reader.read_line(&mut h).unwrap_or(0) == 0 || h == "\r\n" {
                    break;
                }
            }
            let target = line.split_whitespace().nth(1).unwrap_or("").to_string();
            log.lock().unwrap().push(target.clone());
            let (status, body) = route(&target);
            let resp = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            let _ = stream.write_all(resp.as_bytes());
        }
    });
    (format!("http://{addr}"), seen)
}

fn decoded(target: &str) -> String {
    target
        .replace("%2F", "/")
        .replace("%20", " ")
        .replace('+', " ")
}

#[test]
fn wikipedia_client_searches_then_fetches_extracts() {
    let (base, seen) = serve(|target| {
        let t = decoded(target);
        if t.contains("list=search") {
            let body = r#"{"query":{"search":[{"pageid":11,"title":"Tennis"},{"pageid":12,"title":"Racket"},{"pageid":13,"title":"Extra"}]}}"#;
            (200, body.to_string())
        } else if t.contains("pageids=11") {
            (200, r#"{"query":{"pages":{"11":{"extract":"Tennis is a racket sport. It is played on a court."}}}}"#.into())
        } else if t.contains("pageids=12") {
            (
                200,
                r#"{"query":{"pages":{"12":{"extract":"A racket has strings."}}}}"#.into(),
            )
        } else {
            (404, "{}".into())
        }
    });
    let client = WikipediaClient::new(format!("{base}/w/api.php"), 2);
    let articles = client.fetch("tennis racket").unwrap();
    assert_eq!(articles.len(), 2);
    assert_eq!(articles[0].id, "11");
    assert_eq!(articles[0].title, "Tennis");
    assert_eq!(
        articles[0].sentences,
        ["Tennis is a racket sport.", "It is played on a court."]
    );
    assert_eq!(articles[1].sentences, ["A racket has strings."]);
    let seen = seen.lock().unwrap().clone();
    assert_eq!(seen.len(), 3);
    assert!(decoded(&seen[0]).contains("srsearch=tennis racket"));
    assert!(seen.iter().all(|t| t.starts_with("/w/api.php?")));
}

#[test]
fn conceptnet_client_renders_edges() {
    let (base, seen) = serve(|target| {
        let body = if decoded(target).contains("node=/c/en/red_apple") {
            r#"{"edges":[
                {"start":{"label":"red apple"},"rel":{"label":"IsA"},"end":{"label":"fruit"},"weight":2.0},
                {"start":{"label":"red apple"},"rel":{"label":"HasFirstSubevent"},"end":{"label":"bite"}},
                {"start":{},"rel":{"label":"IsA"},"end":{"label":"broken"}}
            ]}"#
        } else {
            r#"{"edges":[]}"#
        };
        (200, body.to_string())
    });
    let client = ConceptNetClient::new(base.clone(), 7, RelationTemplates::default());
    let articles = client.fetch("Red Apple").unwrap();
    assert_eq!(articles.len(), 1);
    assert_eq!(articles[0].id, "/c/en/red_apple");
    assert_eq!(
        articles[0].sentences,
        ["red apple is a fruit", "red apple has first subevent bite"]
    );
    assert!(client.fetch("nothing").unwrap().is_empty());
    let first = decoded(&seen.lock().unwrap()[0]);
    assert!(first.starts_with("/query?"), "{first}");
    assert!(first.contains("limit=7") && first.contains("other=/c/en"));
}

#[test]
fn server_errors_become_client_errors_and_are_retried() {
    let calls = Arc::new(Mutex::new(0));
    let c = calls.clone();
    let (base, _) = serve(move |_| {
        let mut n = c.lock().unwrap();
        *n += 1;
        if *n <= 2 {
            (500, "{}".into())
        } else {
            (200, r#"{"edges":[{"start":{"label":"dog"},"rel":{"label":"IsA"},"end":{"label":"animal"}}]}"#.into())
        }
    });
    let client = ConceptNetClient::new(base.clone(), 5, RelationTemplates::default());
    assert!(matches!(client.fetch("dog"), Err(Error::Client { .. })));
    let dir = tempfile::tempdir().unwrap();
    let cache = Arc::new(ResponseCache::new(dir.path(), false));
    let cached = CachedClient::new(
        ConceptNetClient::new(base, 5, RelationTemplates::default()),
        cache,
    )
    .with_retries(2, Duration::from_millis(1));
    let articles = cached.fetch("dog").unwrap();
    assert_eq!(articles[0].sentences, ["dog is a animal"]);
    assert_eq!(*calls.lock().unwrap(), 3);
}

#[test]
fn cache_is_deterministic_and_offline_misses_fail() {
    let mut map = BTreeMap::new();
    map.insert(
        "dog".to_string(),
        vec![Article {
            id: "d".into(),
            title: "Dog".into(),
            sentences: vec!["A dog barks.".into()],
        }],
    );
    let dir = tempfile::tempdir().unwrap();
    let online = CachedClient::new(
        FixtureWikipedia::new(map.clone()),
        Arc::new(ResponseCache::new(dir.path(), false)),
    );
    let first = online.fetch("dog").unwrap();
    let path = ResponseCache::new(dir.path(), false).path_for("wikipedia", "dog");
    let bytes = std::fs::read(&path).unwrap();

    let offline = CachedClient::new(
        FixtureWikipedia::new(BTreeMap::new()),
        Arc::new(ResponseCache::new(dir.path(), true)),
    );
    assert_eq!(offline.fetch("dog").unwrap(), first);
    assert_eq!(online.fetch("dog").unwrap(), first);
    assert_eq!(std::fs::read(&path).unwrap(), bytes);
    assert!(matches!(offline.fetch("cat"), Err(Error::CacheMiss { .. })));

    let other = tempfile::tempdir().unwrap();
    let again = CachedClient::new(
        FixtureWikipedia::new(map),
        Arc::new(ResponseCache::new(other.path(), false)),
    );
    assert_eq!(again.fetch("dog").unwrap(), first);
    let entry = |p: &std::path::Path| -> serde_json::Value {
        let mut v: serde_json::Value = serde_json::from_slice(&std::fs::read(p).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("fetched_at");
        v
    };
    assert_eq!(
        entry(&path),
        entry(&ResponseCache::new(other.path(), false).path_for("wikipedia", "dog"))
    );
}
