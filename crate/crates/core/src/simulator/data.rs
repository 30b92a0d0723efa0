use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where a dataset came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Source {
    GaussianMixture {
        p: usize,
        train: usize,
        test: usize,
        seed: u64,
    },
    Csv {
        train: PathBuf,
        test: Option<PathBuf>,
    },
}

/// `x -> (x - mean) / scale`, applied column-wise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineTransform {
    pub mean: Vec<f64>,
    pub scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: Source,
    pub transform: Option<AffineTransform>,
}

/// Inputs as columns (`p x T`), targets as columns (`d x T`), optional test split.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub x_test: Option<DMatrix<f64>>,
    pub y_test: Option<DMatrix<f64>>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(
        x: DMatrix<f64>,
        y: DMatrix<f64>,
        test: Option<(DMatrix<f64>, DMatrix<f64>)>,
        provenance: Provenance,
    ) -> Result<Self> {
        let (x_test, y_test) = match test {
            Some((a, b)) => (Some(a), Some(b)),
            None => (None, None),
        };
        let ds = Dataset {
            x,
            y,
            x_test,
            y_test,
            provenance,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Dimension(msg));
        if self.x.ncols() == 0 || self.x.nrows() == 0 || self.y.nrows() == 0 {
            return bad("empty dataset".into());
        }
        if self.x.ncols() != self.y.ncols() {
            return bad(format!(
                "X has {} columns, Y has {}",
                self.x.ncols(),
                self.y.ncols()
            ));
        }
        match (&self.x_test, &self.y_test) {
            (None, None) => {}
            (Some(xt), Some(yt)) => {
                if xt.nrows() != self.x.nrows()
                    || yt.nrows() != self.y.nrows()
                    || xt.ncols() != yt.ncols()
                {
                    return bad("test split does not match the training split".into());
                }
                if xt.ncols() == 0 {
                    return bad("empty test split".into());
                }
            }
            _ => return bad("test inputs and targets must come together".into()),
        }
        let all = [
            Some(&self.x),
            Some(&self.y),
            self.x_test.as_ref(),
            self.y_test.as_ref(),
        ];
        if all
            .iter()
            .flatten()
            .any(|m| m.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::Domain("dataset contains non-finite values".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.x.nrows()
    }

    pub fn samples(&self) -> usize {
        self.x.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.y.nrows()
    }

    /// The test split, or the training split when there is none.
    pub fn test_or_train(&self) -> (&DMatrix<f64>, &DMatrix<f64>) {
        match (&self.x_test, &self.y_test) {
            (Some(x), Some(y)) => (x, y),
            _ => (&self.x, &self.y),
        }
    }
}

fn mixture_block(p: usize, t: usize, rng: &mut ChaCha8Rng) -> (DMatrix<f64>, DMatrix<f64>) {
    let pf = p as f64;
    let small = Normal::new(0.0, 1.0 / pf.sqrt()).unwrap();
    let large = Normal::new(0.0, 2.0 / pf.sqrt()).unwrap();
    let mut x = DMatrix::zeros(p, t);
    let mut y = DMatrix::zeros(1, t);
    for j in 0..t {
        let first = j < t / 2;
        y[(0, j)] = if first { -1.0 } else { 1.0 };
        for i in 0..p {
            // Class 1 has variance 1/p on the first half of coordinates and 4/p on the second.
            let dist = if (i < p / 2) == first { &small } else { &large };
            x[(i, j)] = dist.sample(rng);
        }
    }
    (x, y)
}

/// Two-class Gaussian mixture with covariances `diag(I, 4I)/p` and `diag(4I, I)/p`, labels `-1/+1`.
///
/// The first half of each split is class 1.
pub fn gaussian_mixture(p: usize, train: usize, test: usize, seed: u64) -> Result<Dataset> {
    if p == 0
        || train == 0
        || !p.is_multiple_of(2)
        || !train.is_multiple_of(2)
        || !test.is_multiple_of(2)
    {
        return Err(Error::Domain(format!(
            "mixture needs positive even p and T (and even T_hat), got p={p}, T={train}, T_hat={test}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (x, y) = mixture_block(p, train, &mut rng);
    let split = (test > 0).then(|| mixture_block(p, test, &mut rng));
    Dataset::new(
        x,
        y,
        split,
        Provenance {
            source: Source::GaussianMixture {
                p,
                train,
                test,
                seed,
            },
            transform: None,
        },
    )
}

/// Subtract the mean training column and rescale so that `(1/T)|X|_F^2 = 1`;
/// the test inputs get the same transform.
pub fn center_scale(ds: &Dataset) -> Result<Dataset> {
    let t = ds.samples() as f64;
    let mean: DVector<f64> = ds.x.column_mean();
    let apply = |m: &DMatrix<f64>| {
        let mut out = m.clone();
        for mut col in out.column_iter_mut() {
            col -= &mean;
        }
        out
    };
    let centered = apply(&ds.x);
    let raw = (ds.x.norm_squared() / t).sqrt();
    let scale = (centered.norm_squared() / t).sqrt();
    if !(scale > 1e-12 * raw) || scale == 0.0 {
        return Err(Error::Domain(
            "inputs are constant across samples; cannot rescale to unit energy".into(),
        ));
    }
    let mut out = ds.clone();
    out.x = centered / scale;
    out.x_test = ds.x_test.as_ref().map(|m| apply(m) / scale);
    out.provenance.transform = Some(AffineTransform {
        mean: mean.as_slice().to_vec(),
        scale,
    });
    Ok(out)
}

fn read_table(path: &Path, p: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let row = record
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Config(format!("{}: row {}: {e}", path.display(), line + 2)))?;
        if row.len() <= p {
            return Err(Error::Dimension(format!(
                "{}: row {} has {} fields, need more than p={p}",
                path.display(),
                line + 2,
                row.len()
            )));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Dimension(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    let width = rows[0].len();
    let d = width - p;
    let t = rows.len();
    let x = DMatrix::from_fn(p, t, |i, j| rows[j][i]);
    let y = DMatrix::from_fn(d, t, |i, j| rows[j][p + i]);
    Ok((x, y))
}

/// Read `p` feature columns followed by target columns (header row required).
pub fn load_csv(train: &Path, test: Option<&Path>, p: usize) -> Result<Dataset> {
    if p == 0 {
        return Err(Error::Config(
            "CSV input needs p >= 1 feature columns".into(),
        ));
    }
    let (x, y) = read_table(train, p)?;
    let split = test.map(|path| read_table(path, p)).transpose()?;
    Dataset::new(
        x,
        y,
        split,
        Provenance {
            source: Source::Csv {
                train: train.to_path_buf(),
                test: test.map(Path::to_path_buf),
            },
            transform: None,
        },
    )
}
