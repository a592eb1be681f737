use std::fs;
use std::path::Path;

use super::Evaluation;
use crate::config::KeyValues;
use crate::error::{Error, Result};

/// Writes `metrics.txt` (key = value), `confusion.txt` (sequence-level grid),
/// `confusion_utterance.txt` and `curves.txt` (duration buckets) into `dir`.
pub fn write_reports(dir: &Path, evaluation: &Evaluation) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let files = [
        ("metrics.txt", evaluation.to_key_values().to_string()),
        ("confusion.txt", evaluation.sequence.confusion.to_string()),
        ("confusion_utterance.txt", evaluation.utterance.confusion.to_string()),
        ("curves.txt", evaluation.curves()),
    ];
    for (name, text) in files {
        let p = dir.join(name);
        fs::write(&p, text).map_err(|e| Error::io(format!("writing {}", p.display()), e))?;
    }
    Ok(())
}

pub fn read_metrics(path: &Path) -> Result<KeyValues> {
    KeyValues::read(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Task;
    use crate::eval::{evaluate, Aggregation, UtterancePredictions};

    #[test]
    fn files_round_trip() {
        let preds = vec![
            UtterancePredictions { utterance_id: "a".into(), label: 1, log_probs: vec![vec![0.5f64.ln(); 2]; 3] },
            UtterancePredictions { utterance_id: "b".into(), label: 0, log_probs: vec![vec![0.9f64.ln(), 0.1f64.ln()]] },
        ];
        let ev = evaluate(&preds, Task::Binary, Aggregation::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_reports(dir.path(), &ev).unwrap();
        let kv = read_metrics(&dir.path().join("metrics.txt")).unwrap();
        assert_eq!(kv.get("sequence.items"), Some("4"));
        assert!(kv.get("sequence.specificity").is_some());
        let grid = fs::read_to_string(dir.path().join("confusion.txt")).unwrap();
        assert_eq!(grid, "1 0\n3 0\n");
        let curves = fs::read_to_string(dir.path().join("curves.txt")).unwrap();
        assert_eq!(curves.lines().count(), 4);
    }
}
