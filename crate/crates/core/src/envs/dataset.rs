use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use super::bandit::random_action;
use super::Env;
use crate::decorrelation::FeatureBatch;
use crate::error::{invalid, Result};
use crate::rng::{self, Rng};

/// One logged interaction.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetRow {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub env: usize,
}

/// `per_env` uniformly random single-step interactions with every environment.
pub fn collect_dataset(
    envs: &mut [Box<dyn Env>],
    per_env: usize,
    rng: &mut Rng,
) -> Result<Vec<DatasetRow>> {
    let mut rows = Vec::with_capacity(envs.len() * per_env);
    for _ in 0..per_env {
        for (k, env) in envs.iter_mut().enumerate() {
            let seed = rng::next_seed(rng);
            let state = env.reset(seed);
            let action: Vec<f64> = (0..env.action_dim()).map(|_| random_action(rng)).collect();
            let step = env.step(&action)?;
            rows.push(DatasetRow {
                state,
                action,
                reward: step.reward,
                env: k,
            });
        }
    }
    Ok(rows)
}

pub const DATASET_FORMAT_VERSION: u32 = 1;

/// CSV with a `# format_version` line, then header `z0..z{d-1}, a0.., reward, env`.
pub fn write_dataset_csv(path: &Path, rows: &[DatasetRow]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "# format_version={DATASET_FORMAT_VERSION}")?;
    if let Some(first) = rows.first() {
        let mut header: Vec<String> = (0..first.state.len()).map(|j| format!("z{j}")).collect();
        header.extend((0..first.action.len()).map(|j| format!("a{j}")));
        header.push("reward".into());
        header.push("env".into());
        writeln!(out, "{}", header.join(","))?;
    }
    for row in rows {
        let mut fields: Vec<String> = row
            .state
            .iter()
            .chain(&row.action)
            .map(|v| format!("{v}"))
            .collect();
        fields.push(format!("{}", row.reward));
        fields.push(row.env.to_string());
        writeln!(out, "{}", fields.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a file written by [`write_dataset_csv`].
pub fn read_dataset_csv(path: &Path) -> Result<Vec<DatasetRow>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let expected = format!("# format_version={DATASET_FORMAT_VERSION}");
    if lines.next() != Some(expected.as_str()) {
        return invalid(format!(
            "{} does not start with `{expected}`",
            path.display()
        ));
    }
    let Some(header) = lines.next() else {
        return Ok(Vec::new());
    };
    let names: Vec<&str> = header.split(',').collect();
    let d = names.iter().filter(|n| n.starts_with('z')).count();
    let a = names.iter().filter(|n| n.starts_with('a')).count();
    if names.len() != d + a + 2 || names[d + a..] != ["reward", "env"] {
        return invalid(format!("unexpected dataset header `{header}`"));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != names.len() {
            return invalid(format!(
                "dataset row {} has {} fields, expected {}",
                i + 1,
                fields.len(),
                names.len()
            ));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse()
                .or_else(|_| invalid(format!("dataset row {}: `{s}` is not a number", i + 1)))
        };
        let values = fields[..d + a + 1]
            .iter()
            .map(|s| num(s))
            .collect::<Result<Vec<f64>>>()?;
        let env = fields[d + a + 1]
            .parse()
            .or_else(|_| invalid(format!("dataset row {}: bad environment label", i + 1)))?;
        rows.push(DatasetRow {
            state: values[..d].to_vec(),
            action: values[d..d + a].to_vec(),
            reward: values[d + a],
            env,
        });
    }
    Ok(rows)
}

/// The states of `rows` as a labeled batch; the environment count is one more than the largest label.
pub fn dataset_features(rows: &[DatasetRow]) -> Result<FeatureBatch<f64>> {
    let Some(first) = rows.first() else {
        return invalid("empty dataset");
    };
    let d = first.state.len();
    let mut values = Array2::zeros((rows.len(), d));
    for (i, row) in rows.iter().enumerate() {
        if row.state.len() != d {
            return invalid("dataset rows have different state sizes");
        }
        values
            .row_mut(i)
            .assign(&ndarray::ArrayView1::from(&row.state));
    }
    let labels: Vec<usize> = rows.iter().map(|r| r.env).collect();
    let k = labels.iter().max().map_or(1, |m| m + 1);
    FeatureBatch::new(values, labels, k)
}
