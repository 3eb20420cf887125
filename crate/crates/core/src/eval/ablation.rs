use std::fmt::Write;

use super::predict::evaluate;
use crate::config::ModelConfig;
use crate::data::LoadedSample;
use crate::error::Result;
use crate::model::MbaNet;
use crate::training::{train, TrainConfig};

/// Outcome of one `(rfin, dkin)` setting.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationCell {
    pub rfin: usize,
    pub dkin: usize,
    /// Mean validation Dice in percent, or why the setting cannot be built.
    pub outcome: std::result::Result<f64, String>,
}

/// Train and evaluate every `(r, d)` pair with identical seed and budget.
/// Settings whose plan cannot be built are reported, not fatal.
pub fn ablate(
    base: &ModelConfig,
    train_cfg: &TrainConfig,
    train_set: &[LoadedSample],
    val_set: &[LoadedSample],
    settings: &[(usize, usize)],
    mut on_cell: impl FnMut(&AblationCell),
) -> Result<Vec<AblationCell>> {
    let mut cells = Vec::with_capacity(settings.len());
    for &(rfin, dkin) in settings {
        let cfg = base.with_fusion(rfin, dkin);
        let outcome = match MbaNet::init::<f32>(&cfg, train_cfg.seed) {
            Err(e) => Err(e.to_string()),
            Ok((model, mut store)) => {
                train(&model, &mut store, train_set, train_cfg, |_| {})?;
                Ok(100.0 * evaluate(&model, &store, val_set)?.mean_dice())
            }
        };
        let cell = AblationCell { rfin, dkin, outcome };
        on_cell(&cell);
        cells.push(cell);
    }
    Ok(cells)
}

/// Row-major `rfins × dkins` settings.
pub fn grid(rfins: &[usize], dkins: &[usize]) -> Vec<(usize, usize)> {
    rfins.iter().flat_map(|&r| dkins.iter().map(move |&d| (r, d))).collect()
}

pub fn ablation_csv(cells: &[AblationCell]) -> String {
    let mut out = String::from("rfin,dkin,status,dice_mean\n");
    for c in cells {
        match &c.outcome {
            Ok(d) => writeln!(out, "{},{},ok,{d:.2}", c.rfin, c.dkin).unwrap(),
            Err(reason) => writeln!(out, "{},{},invalid,\"{}\"", c.rfin, c.dkin, reason.replace('"', "'")).unwrap(),
        }
    }
    out
}

/// One line per cell: RFIN count, DKIN count, mean Dice. The default
/// fusion counts `(3, 3)` are marked.
pub fn ablation_table(cells: &[AblationCell], default: (usize, usize)) -> String {
    let mut out = format!("{:>4}  {:>4}  {:>14}\n", "RFIN", "DKIN", "Avg. Dice (%)");
    for c in cells {
        let value = match &c.outcome {
            Ok(d) => format!("{d:.2}"),
            Err(_) => "invalid".to_string(),
        };
        let mark = if (c.rfin, c.dkin) == default { "  <- default" } else { "" };
        writeln!(out, "{:>4}  {:>4}  {:>14}{mark}", c.rfin, c.dkin, value).unwrap();
    }
    for c in cells {
        if let Err(reason) = &c.outcome {
            writeln!(out, "invalid ({}, {}): {reason}", c.rfin, c.dkin).unwrap();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_row_major() {
        assert_eq!(grid(&[0, 1], &[1, 3]), vec![(0, 1), (0, 3), (1, 1), (1, 3)]);
        assert_eq!(grid(&[0, 1, 2, 3], &[1, 3, 6]).len(), 12);
    }

    #[test]
    fn table_marks_default_and_invalid() {
        let cells = vec![
            AblationCell { rfin: 3, dkin: 3, outcome: Ok(81.234) },
            AblationCell { rfin: 3, dkin: 6, outcome: Err("cycle".into()) },
        ];
        let t = ablation_table(&cells, (3, 3));
        assert!(t.contains("81.23  <- default"));
        assert!(t.contains("invalid (3, 6): cycle"));
        let csv = ablation_csv(&cells);
        assert_eq!(csv.lines().nth(2).unwrap(), "3,6,invalid,\"cycle\"");
    }
}
