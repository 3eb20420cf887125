use std::collections::BTreeMap;
use std::fmt::Write;

use super::metrics::mean_std;
use crate::data::{Domain, LesionClass};

pub const FOOTER: &str = "Dice at sigmoid probability threshold 0.5; a sample whose prediction and ground truth are both empty scores 100.";

/// Per-sample result.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleScore {
    pub id: String,
    pub class: LesionClass,
    pub domain: Domain,
    pub dice: f64,
}

/// One `(class, domain)` group; `class == None` is the average over all
/// classes of the domain.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub class: Option<LesionClass>,
    pub domain: Domain,
    pub n: usize,
    /// Percent.
    pub dice_mean: f64,
    /// Percent, population standard deviation.
    pub dice_std: f64,
}

impl ReportRow {
    pub fn class_label(&self) -> String {
        self.class.map_or_else(|| "all".to_string(), |c| c.to_string())
    }

    pub fn cell(&self) -> String {
        format!("{:.2} ± {:.2}", self.dice_mean, self.dice_std)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub samples: Vec<SampleScore>,
    pub rows: Vec<ReportRow>,
}

impl EvalReport {
    pub fn from_scores(samples: Vec<SampleScore>) -> Self {
        let mut groups: BTreeMap<(Domain, Option<LesionClass>), Vec<f64>> = BTreeMap::new();
        for s in &samples {
            groups.entry((s.domain, Some(s.class))).or_default().push(s.dice);
            groups.entry((s.domain, None)).or_default().push(s.dice);
        }
        let rows = groups
            .into_iter()
            .map(|((domain, class), dices)| {
                let (mean, std) = mean_std(&dices);
                ReportRow { class, domain, n: dices.len(), dice_mean: 100.0 * mean, dice_std: 100.0 * std }
            })
            .collect();
        Self { samples, rows }
    }

    pub fn row(&self, domain: Domain, class: Option<LesionClass>) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.domain == domain && r.class == class)
    }

    /// Mean Dice in `[0, 1]` over every sample.
    pub fn mean_dice(&self) -> f64 {
        mean_std(&self.samples.iter().map(|s| s.dice).collect::<Vec<_>>()).0
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,domain,n,dice_mean,dice_std\n");
        for r in &self.rows {
            writeln!(out, "{},{},{},{:.2},{:.2}", r.class_label(), r.domain, r.n, r.dice_mean, r.dice_std).unwrap();
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("{:<8} {:<6} {:>4}  {:>16}\n", "class", "domain", "n", "Dice (%)");
        for r in &self.rows {
            writeln!(out, "{:<8} {:<6} {:>4}  {:>16}", r.class_label(), r.domain.to_string(), r.n, r.cell()).unwrap();
        }
        out.push_str(FOOTER);
        out.push('\n');
        out
    }
}

/// In-domain and cross-domain rows side by side, one column per class and
/// an average column.
pub fn cross_domain_table(train_domain: Domain, results: &[(Domain, &EvalReport)]) -> String {
    let mut out = format!(
        "{:<22} {:>16} {:>16} {:>16} {:>16}\n",
        "setting", "cystic", "solid", "mixed", "average"
    );
    for &(domain, report) in results {
        let kind = if domain == train_domain { "in-domain" } else { "cross-domain" };
        let label = format!("{kind} ({train_domain}->{domain})");
        let cell = |class| report.row(domain, class).map_or_else(|| "-".to_string(), ReportRow::cell);
        writeln!(
            out,
            "{:<22} {:>16} {:>16} {:>16} {:>16}",
            label,
            cell(Some(LesionClass::Cystic)),
            cell(Some(LesionClass::Solid)),
            cell(Some(LesionClass::Mixed)),
            cell(None)
        )
        .unwrap();
    }
    out.push_str(FOOTER);
    out.push('\n');
    out
}
