use std::path::Path;

use super::run::csv_version_line;
use crate::decorrelation::WeightVector;
use crate::error::{invalid, Result};

/// One `w` column under the version line.
pub fn write_weights_csv(path: &Path, w: &WeightVector<f64>) -> Result<()> {
    let mut text = csv_version_line();
    text.push_str("w\n");
    for v in w.as_slice() {
        text.push_str(&format!("{v}\n"));
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_weights_csv(path: &Path) -> Result<WeightVector<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    if Some(csv_version_line().trim_end()) != lines.next() || lines.next() != Some("w") {
        return invalid(format!(
            "{} is not a version-1 weights file",
            path.display()
        ));
    }
    let w = lines
        .enumerate()
        .map(|(i, l)| {
            l.trim()
                .parse::<f64>()
                .or_else(|_| invalid(format!("weights row {}: `{l}`", i + 1)))
        })
        .collect::<Result<Vec<f64>>>()?;
    WeightVector::new(w)
}
