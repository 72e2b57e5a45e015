use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::candidates::Candidate;
use crate::error::{Error, Result};
use crate::validation::ANNOTATIONS_PER_QUESTION;

/// One question with its gold annotations and image objects.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QAInstance {
    #[serde(deserialize_with = "crate::ids::string_or_number")]
    pub question_id: String,
    pub question: String,
    #[serde(deserialize_with = "crate::ids::string_or_number")]
    pub image_id: String,
    pub annotations: Vec<String>,
    /// Relative to the dataset file's directory.
    pub objects_file: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
    /// Top-k base-scorer candidates, filled in at ingestion.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub candidate_scores: Vec<Candidate>,
}

/// On-disk layout: `{"questions": [QAInstance, ...]}`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetFile {
    pub questions: Vec<QAInstance>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    /// Directory that `objects_file` paths are relative to.
    pub root: PathBuf,
    pub questions: Vec<QAInstance>,
}

impl Dataset {
    /// Loads and validates a dataset file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: DatasetFile = serde_json::from_str(&text)
            .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
        let dataset = Dataset {
            root: path.parent().map(Path::to_path_buf).unwrap_or_default(),
            questions: file.questions,
        };
        dataset.validate()?;
        Ok(dataset)
    }

    pub fn objects_path(&self, inst: &QAInstance) -> PathBuf {
        self.root.join(&inst.objects_file)
    }

    pub fn validate(&self) -> Result<()> {
        if self.questions.is_empty() {
            return Err(Error::data("dataset has no questions"));
        }
        let mut seen = HashSet::new();
        for q in &self.questions {
            if !seen.insert(q.question_id.as_str()) {
                return Err(Error::data(format!(
                    "duplicate question id {}",
                    q.question_id
                )));
            }
            if q.question.trim().is_empty() {
                return Err(Error::data(format!("question {} is empty", q.question_id)));
            }
            if q.annotations.len() != ANNOTATIONS_PER_QUESTION {
                return Err(Error::data(format!(
                    "question {} has {} annotations, expected {ANNOTATIONS_PER_QUESTION}",
                    q.question_id,
                    q.annotations.len()
                )));
            }
            let objects = self.objects_path(q);
            if !objects.is_file() {
                return Err(Error::data(format!(
                    "question {}: objects file {} does not exist",
                    q.question_id,
                    objects.display()
                )));
            }
        }
        Ok(())
    }

    /// Questions in `split`, or all of them when `split` is `None`.
    pub fn split<'a>(
        &'a self,
        split: Option<&'a str>,
    ) -> impl Iterator<Item = &'a QAInstance> + 'a {
        self.questions
            .iter()
            .filter(move |q| split.is_none() || q.split.as_deref() == split)
    }
}

#[derive(Deserialize)]
struct RawQuestions {
    questions: Vec<RawQuestion>,
}

#[derive(Deserialize)]
struct RawQuestion {
    #[serde(deserialize_with = "crate::ids::string_or_number")]
    question_id: String,
    #[serde(deserialize_with = "crate::ids::string_or_number")]
    image_id: String,
    question: String,
}

#[derive(Deserialize)]
struct RawAnnotations {
    annotations: Vec<RawAnnotation>,
}

#[derive(Deserialize)]
struct RawAnnotation {
    #[serde(deserialize_with = "crate::ids::string_or_number")]
    question_id: String,
    answers: Vec<RawAnswer>,
}

#[derive(Deserialize)]
struct RawAnswer {
    answer: String,
}

/// Builds a dataset from the raw OK-VQA question and annotation files.
///
/// The raw files list every annotation twice (10 answers); every other one
/// is kept. `objects_template` names the objects file, with `{image_id}`
/// replaced per question.
pub fn convert_okvqa(
    questions_path: &Path,
    annotations_path: &Path,
    objects_template: &str,
    split: Option<&str>,
) -> Result<DatasetFile> {
    let text = std::fs::read_to_string(questions_path).map_err(|e| Error::io(questions_path, e))?;
    let questions: RawQuestions = serde_json::from_str(&text)
        .map_err(|e| Error::data(format!("{}: {e}", questions_path.display())))?;
    let text =
        std::fs::read_to_string(annotations_path).map_err(|e| Error::io(annotations_path, e))?;
    let annotations: RawAnnotations = serde_json::from_str(&text)
        .map_err(|e| Error::data(format!("{}: {e}", annotations_path.display())))?;
    let by_id: BTreeMap<String, Vec<String>> = annotations
        .annotations
        .into_iter()
        .map(|a| {
            (
                a.question_id,
                a.answers.into_iter().map(|r| r.answer).collect(),
            )
        })
        .collect();

    let mut out = Vec::with_capacity(questions.questions.len());
    for q in questions.questions {
        let answers = by_id
            .get(&q.question_id)
            .ok_or_else(|| Error::data(format!("no annotations for question {}", q.question_id)))?;
        let annotations: Vec<String> = match answers.len() {
            n if n == 2 * ANNOTATIONS_PER_QUESTION => answers.iter().step_by(2).cloned().collect(),
            ANNOTATIONS_PER_QUESTION => answers.clone(),
            n => {
                return Err(Error::data(format!(
                    "question {} has {n} answers, expected 5 or 10",
                    q.question_id
                )))
            }
        };
        out.push(QAInstance {
            objects_file: PathBuf::from(objects_template.replace("{image_id}", &q.image_id)),
            question_id: q.question_id,
            question: q.question,
            image_id: q.image_id,
            annotations,
            split: split.map(str::to_string),
            candidate_scores: Vec::new(),
        });
    }
    Ok(DatasetFile { questions: out })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn converter_keeps_every_other_answer() {
        let dir = tempfile::tempdir().unwrap();
        let q = write(
            dir.path(),
            "q.json",
            r#"{"questions": [{"image_id": 9, "question": "What sport is this?", "question_id": 90}]}"#,
        );
        let answers: Vec<String> = [
            "tennis", "tennis", "tennis", "tennis", "squash", "squash", "tennis", "tennis", "ball",
            "ball",
        ]
        .iter()
        .map(|a| format!(r#"{{"answer": "{a}", "answer_confidence": "yes"}}"#))
        .collect();
        let a = write(
            dir.path(),
            "a.json",
            &format!(
                r#"{{"annotations": [{{"question_id": 90, "answers": [{}]}}]}}"#,
                answers.join(",")
            ),
        );
        let out = convert_okvqa(&q, &a, "objects/{image_id}.json", Some("val")).unwrap();
        let inst = &out.questions[0];
        assert_eq!(inst.question_id, "90");
        assert_eq!(
            inst.annotations,
            vec!["tennis", "tennis", "squash", "tennis", "ball"]
        );
        assert_eq!(inst.objects_file, PathBuf::from("objects/9.json"));
        assert_eq!(inst.split.as_deref(), Some("val"));
    }

    #[test]
    fn validation_rejects_bad_annotation_counts_and_missing_objects() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "o.json", r#"{"image_id": "1", "objects": []}"#);
        let inst = QAInstance {
            question_id: "1".into(),
            question: "what is this".into(),
            image_id: "1".into(),
            annotations: vec!["a".into(); 5],
            objects_file: "o.json".into(),
            split: None,
            candidate_scores: Vec::new(),
        };
        let mut ds = Dataset {
            root: dir.path().to_path_buf(),
            questions: vec![inst.clone()],
        };
        ds.validate().unwrap();
        ds.questions[0].annotations.pop();
        assert!(matches!(ds.validate(), Err(Error::Data(_))));
        ds.questions[0] = QAInstance {
            objects_file: "missing.json".into(),
            ..inst.clone()
        };
        assert!(matches!(ds.validate(), Err(Error::Data(_))));
        ds.questions = vec![inst.clone(), inst];
        assert!(matches!(ds.validate(), Err(Error::Data(_))));
    }
}
