use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Per-fold AUCs of one method for one (train, test) dataset pair.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub method: String,
    pub train_dataset: String,
    pub test_dataset: String,
    pub fold_auc: Vec<f64>,
}

impl EvalReport {
    pub fn mean(&self) -> f64 {
        self.fold_auc.iter().sum::<f64>() / self.fold_auc.len().max(1) as f64
    }

    /// Sample standard deviation across folds; zero for a single fold.
    pub fn std(&self) -> f64 {
        let n = self.fold_auc.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean();
        (self.fold_auc.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    }
}

/// `train,test,method,fold,auc` rows followed by no summary; the text table
/// carries mean and std.
pub fn reports_csv(reports: &[EvalReport]) -> String {
    let mut s = String::from("train,test,method,fold,auc\n");
    for r in reports {
        for (f, auc) in r.fold_auc.iter().enumerate() {
            writeln!(s, "{},{},{},{f},{auc}", r.train_dataset, r.test_dataset, r.method).ok();
        }
    }
    s
}

/// Train datasets as row groups, test datasets as columns, one line per
/// method with `mean ± std`.
pub fn format_table(reports: &[EvalReport]) -> String {
    let trains: BTreeSet<&str> = reports.iter().map(|r| r.train_dataset.as_str()).collect();
    let tests: BTreeSet<&str> = reports.iter().map(|r| r.test_dataset.as_str()).collect();
    let method_w = reports.iter().map(|r| r.method.len()).max().unwrap_or(6).max(6);
    let mut s = String::new();
    write!(s, "{:<14} {:<method_w$}", "train", "method").ok();
    for t in &tests {
        write!(s, "  {:>17}", format!("test: {t}")).ok();
    }
    s.push('\n');
    for train in &trains {
        let mut methods: Vec<&str> = Vec::new();
        for r in reports.iter().filter(|r| r.train_dataset == *train) {
            if !methods.contains(&r.method.as_str()) {
                methods.push(&r.method);
            }
        }
        for m in methods {
            write!(s, "{:<14} {:<method_w$}", train, m).ok();
            for t in &tests {
                match reports.iter().find(|r| r.train_dataset == *train && r.test_dataset == *t && r.method == m) {
                    Some(r) => write!(s, "  {:>17}", format!("{:.3} ± {:.3}", r.mean(), r.std())).ok(),
                    None => write!(s, "  {:>17}", "-").ok(),
                };
            }
            s.push('\n');
        }
    }
    s
}

pub fn write_reports(dir: &Path, reports: &[EvalReport]) -> Result<()> {
    let csv = dir.join("report.csv");
    fs::write(&csv, reports_csv(reports)).map_err(|e| Error::io(&csv, e))?;
    let txt = dir.join("report.txt");
    fs::write(&txt, format_table(reports)).map_err(|e| Error::io(&txt, e))
}
