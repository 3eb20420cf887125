//! JSON-lines sample manifest.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::fnv1a;

pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LesionClass {
    Cystic,
    Solid,
    Mixed,
}

impl LesionClass {
    pub const ALL: [LesionClass; 3] = [LesionClass::Cystic, LesionClass::Solid, LesionClass::Mixed];
}

impl fmt::Display for LesionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LesionClass::Cystic => "cystic",
            LesionClass::Solid => "solid",
            LesionClass::Mixed => "mixed",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Domain {
    A,
    B,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Domain::A => "A",
            Domain::B => "B",
        })
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(Domain::A),
            "B" | "b" => Ok(Domain::B),
            other => Err(Error::Data(format!("unknown domain `{other}` (expected A or B)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Data(format!("unknown split `{other}` (expected train, val or test)"))),
        }
    }
}

/// One manifest line. Paths are relative to the dataset root.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sample {
    pub id: String,
    pub image: String,
    pub mask: String,
    pub class: LesionClass,
    pub domain: Domain,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Manifest {
    pub root: PathBuf,
    pub samples: Vec<Sample>,
}

impl Manifest {
    pub fn read(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut samples = Vec::new();
        for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let sample: Sample = serde_json::from_str(line)
                .map_err(|e| Error::Data(format!("{}:{}: {e}", path.display(), n + 1)))?;
            samples.push(sample);
        }
        let mut ids: Vec<&str> = samples.iter().map(|s| s.id.as_str()).collect();
        ids.sort_unstable();
        if let Some(dup) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Data(format!("{}: duplicate sample id `{}`", path.display(), dup[0])));
        }
        Ok(Self { root: root.to_path_buf(), samples })
    }

    pub fn write(&self) -> Result<()> {
        let path = self.root.join(MANIFEST_FILE);
        let mut file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        for s in &self.samples {
            writeln!(file, "{}", serde_json::to_string(s)?).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    /// Samples of `split`, optionally restricted to one domain.
    pub fn select(&self, split: Split, domain: Option<Domain>) -> Vec<&Sample> {
        self.samples.iter().filter(|s| s.split == split && domain.map_or(true, |d| s.domain == d)).collect()
    }
}

/// Per-split counts closest to a 6:1:3 ratio that sum to `total`.
pub fn split_counts(total: usize) -> [usize; 3] {
    let val = (total as f64 * 0.1).round() as usize;
    let test = (total as f64 * 0.3).round() as usize;
    [total - val - test, val, test]
}

/// Order `ids` by a seeded hash and deal out exactly `counts` train, val
/// and test entries. Returns the split of each input id.
pub fn assign_splits(ids: &[String], counts: [usize; 3], seed: u64) -> Result<Vec<Split>> {
    let total: usize = counts.iter().sum();
    if total != ids.len() {
        return Err(Error::Data(format!("split counts {counts:?} do not add up to {} ids", ids.len())));
    }
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by_key(|&i| (fnv1a(seed, &ids[i]), i));
    let mut out = vec![Split::Train; ids.len()];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = if rank < counts[0] {
            Split::Train
        } else if rank < counts[0] + counts[1] {
            Split::Val
        } else {
            Split::Test
        };
    }
    Ok(out)
}
