//! Candidate streams: seeded generators for the reference problems, CSV
//! point files, and the feature maps turning raw points into regression
//! vectors.
//!
//! Generated streams draw from `ChaCha8Rng::seed_from_u64(seed)` with the
//! ChaCha stream number set to `2 * rep`; the scrambler of replication
//! `rep` uses stream `2 * rep + 1`. Replications are therefore independent
//! and each is reproducible on its own.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, ensure, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    /// `X ~ N(0, I_d)`.
    NormalIid { d: usize },
    /// `X ~ U([-1, 1]^d)`.
    UniformCube { d: usize },
    /// Scalar `X ~ N(0, 1)`, meant for the quadratic model.
    QuadraticNormal,
    /// `N(0, I_2)` with probability 1/2, otherwise one of `(+-1, +-1)`.
    MixtureNormalDiscrete,
    /// Uniform on one of three nested spheres, chosen with equal odds.
    ThreeSpheres { d: usize, radii: [f64; 3] },
    /// `X_i = i / N`.
    Ramp,
    /// `X_i = sin(2 pi nu i / N)`.
    Sine { nu: f64 },
    /// One point per line, comma-separated coordinates.
    File { path: PathBuf },
}

pub const DEFAULT_SPHERE_RADII: [f64; 3] = [3.0, 2.0, 1.0];
pub const DEFAULT_SINE_NU: f64 = 5.0;

impl Source {
    /// Dimension of the raw points; `None` for files until read.
    pub fn raw_dim(&self) -> Option<usize> {
        match self {
            Source::NormalIid { d } | Source::UniformCube { d } | Source::ThreeSpheres { d, .. } => Some(*d),
            Source::QuadraticNormal | Source::Ramp | Source::Sine { .. } => Some(1),
            Source::MixtureNormalDiscrete => Some(2),
            Source::File { .. } => None,
        }
    }

    /// Feature map used when none is given.
    pub fn default_model(&self) -> Model {
        match self {
            Source::QuadraticNormal | Source::Ramp | Source::Sine { .. } => {
                Model::Polynomial { degree: 2, intercept: true }
            }
            _ => Model::Identity,
        }
    }
}

impl FromStr for Source {
    type Err = anyhow::Error;

    /// `normal:D`, `uniform:D`, `quadratic-normal`, `mixture`,
    /// `spheres:D[:R1,R2,R3]`, `ramp`, `sine[:NU]`, `file:PATH`.
    fn from_str(s: &str) -> Result<Self> {
        let (head, rest) = s.split_once(':').unwrap_or((s, ""));
        let dim = |r: &str| -> Result<usize> {
            let d: usize = r.parse().with_context(|| format!("bad dimension {r:?} in stream {s:?}"))?;
            ensure!(d >= 1, "stream dimension must be >= 1");
            Ok(d)
        };
        Ok(match head {
            "normal" => Source::NormalIid { d: dim(rest)? },
            "uniform" => Source::UniformCube { d: dim(rest)? },
            "quadratic-normal" => Source::QuadraticNormal,
            "mixture" => Source::MixtureNormalDiscrete,
            "spheres" => {
                let (d, radii) = rest.split_once(':').unwrap_or((rest, ""));
                let radii = if radii.is_empty() {
                    DEFAULT_SPHERE_RADII
                } else {
                    let r: Vec<f64> = radii
                        .split(',')
                        .map(str::parse)
                        .collect::<Result<_, _>>()
                        .with_context(|| format!("bad radii in stream {s:?}"))?;
                    ensure!(r.len() == 3, "three radii expected, got {}", r.len());
                    ensure!(r[0] > r[1] && r[1] > r[2] && r[2] > 0.0, "radii must be decreasing and positive");
                    [r[0], r[1], r[2]]
                };
                Source::ThreeSpheres { d: dim(d)?, radii }
            }
            "ramp" => Source::Ramp,
            "sine" => Source::Sine {
                nu: if rest.is_empty() { DEFAULT_SINE_NU } else { rest.parse().context("bad sine frequency")? },
            },
            "file" => {
                ensure!(!rest.is_empty(), "file stream needs a path");
                Source::File { path: PathBuf::from(rest) }
            }
            _ => bail!("unknown stream {s:?}"),
        })
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::NormalIid { d } => write!(f, "normal:{d}"),
            Source::UniformCube { d } => write!(f, "uniform:{d}"),
            Source::QuadraticNormal => write!(f, "quadratic-normal"),
            Source::MixtureNormalDiscrete => write!(f, "mixture"),
            Source::ThreeSpheres { d, radii } => write!(f, "spheres:{d}:{},{},{}", radii[0], radii[1], radii[2]),
            Source::Ramp => write!(f, "ramp"),
            Source::Sine { nu } => write!(f, "sine:{nu}"),
            Source::File { path } => write!(f, "file:{}", path.display()),
        }
    }
}

/// Feature map from a raw point to the regression vector `f(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    /// `f(x) = x`.
    Identity,
    /// `f(x) = (1, x)`.
    WithIntercept,
    /// `f(x) = ([1,] x, x^2, ..., x^degree)` for scalar `x`.
    Polynomial { degree: usize, intercept: bool },
}

impl Model {
    pub fn dim(&self, raw_dim: usize) -> Result<usize> {
        Ok(match *self {
            Model::Identity => raw_dim,
            Model::WithIntercept => raw_dim + 1,
            Model::Polynomial { degree, intercept } => {
                ensure!(raw_dim == 1, "polynomial model needs scalar points, got dimension {raw_dim}");
                ensure!(degree >= 1, "polynomial degree must be >= 1");
                degree + usize::from(intercept)
            }
        })
    }

    pub fn features(&self, x: &[f64]) -> Vec<f64> {
        match *self {
            Model::Identity => x.to_vec(),
            Model::WithIntercept => std::iter::once(1.0).chain(x.iter().copied()).collect(),
            Model::Polynomial { degree, intercept } => {
                let mut f = Vec::with_capacity(degree + 1);
                if intercept {
                    f.push(1.0);
                }
                let mut v = 1.0;
                for _ in 0..degree {
                    v *= x[0];
                    f.push(v);
                }
                f
            }
        }
    }
}

impl FromStr for Model {
    type Err = anyhow::Error;

    /// `identity`, `intercept`, `poly:DEG` (with intercept) or
    /// `poly-noint:DEG`.
    fn from_str(s: &str) -> Result<Self> {
        let (head, rest) = s.split_once(':').unwrap_or((s, ""));
        Ok(match head {
            "identity" => Model::Identity,
            "intercept" => Model::WithIntercept,
            "poly" | "poly-noint" => Model::Polynomial {
                degree: rest.parse().with_context(|| format!("bad polynomial degree in {s:?}"))?,
                intercept: head == "poly",
            },
            _ => bail!("unknown model {s:?}"),
        })
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Model::Identity => write!(f, "identity"),
            Model::WithIntercept => write!(f, "intercept"),
            Model::Polynomial { degree, intercept: true } => write!(f, "poly:{degree}"),
            Model::Polynomial { degree, intercept: false } => write!(f, "poly-noint:{degree}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamSpec {
    pub source: Source,
    /// Stream length `N`; for files, `0` means all rows.
    pub n_total: u64,
    pub seed: u64,
    /// `None` selects [`Source::default_model`].
    pub model: Option<Model>,
}

impl StreamSpec {
    pub fn new(source: Source, n_total: u64, seed: u64) -> Self {
        StreamSpec { source, n_total, seed, model: None }
    }

    pub fn model(&self) -> Model {
        self.model.unwrap_or_else(|| self.source.default_model())
    }

    /// Materializes the raw points of replication `rep`.
    pub fn points(&self, rep: u64) -> Result<Points> {
        match &self.source {
            Source::File { path } => {
                let mut rows = read_points(path)?;
                if self.n_total > 0 {
                    ensure!(
                        rows.len() as u64 >= self.n_total,
                        "{} holds {} points, fewer than the requested {}",
                        path.display(),
                        rows.len(),
                        self.n_total
                    );
                    rows.truncate(self.n_total as usize);
                }
                Ok(Points::Stored(rows.into_iter()))
            }
            src => {
                ensure!(self.n_total > 0, "generated streams need a positive length");
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rng.set_stream(2 * rep);
                Ok(Points::Generated(Box::new(Generator { source: src.clone(), rng, i: 0, n: self.n_total })))
            }
        }
    }

    /// Generator for the scrambler of replication `rep`.
    pub fn scramble_rng(&self, rep: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(2 * rep + 1);
        rng
    }
}

/// Raw points of one replication.
pub enum Points {
    Generated(Box<Generator>),
    Stored(std::vec::IntoIter<Vec<f64>>),
}

impl Iterator for Points {
    type Item = Vec<f64>;

    fn next(&mut self) -> Option<Vec<f64>> {
        match self {
            Points::Generated(g) => g.next(),
            Points::Stored(it) => it.next(),
        }
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        match self {
            Points::Generated(g) => {
                let left = (g.n - g.i) as usize;
                (left, Some(left))
            }
            Points::Stored(it) => it.size_hint(),
        }
    }
}

pub struct Generator {
    source: Source,
    rng: ChaCha8Rng,
    i: u64,
    n: u64,
}

impl Generator {
    fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    fn normal_vec(&mut self, d: usize) -> Vec<f64> {
        (0..d).map(|_| self.normal()).collect()
    }
}

impl Iterator for Generator {
    type Item = Vec<f64>;

    fn next(&mut self) -> Option<Vec<f64>> {
        if self.i >= self.n {
            return None;
        }
        self.i += 1;
        let t = self.i as f64 / self.n as f64;
        Some(match self.source.clone() {
            Source::NormalIid { d } => self.normal_vec(d),
            Source::UniformCube { d } => (0..d).map(|_| self.rng.random_range(-1.0..1.0)).collect(),
            Source::QuadraticNormal => vec![self.normal()],
            Source::MixtureNormalDiscrete => {
                if self.rng.random_bool(0.5) {
                    self.normal_vec(2)
                } else {
                    let c = self.rng.random_range(0..4u32);
                    vec![if c & 1 == 0 { 1.0 } else { -1.0 }, if c & 2 == 0 { 1.0 } else { -1.0 }]
                }
            }
            Source::ThreeSpheres { d, radii } => {
                let r = radii[self.rng.random_range(0..3u32) as usize];
                let mut v = self.normal_vec(d);
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.iter_mut().for_each(|x| *x *= r / norm);
                v
            }
            Source::Ramp => vec![t],
            Source::Sine { nu } => vec![(2.0 * std::f64::consts::PI * nu * t).sin()],
            Source::File { .. } => unreachable!("file sources are stored"),
        })
    }
}

/// Reads one point per line (comma-separated). Blank lines and lines
/// starting with `#` are skipped.
pub fn read_points(path: &Path) -> Result<Vec<Vec<f64>>> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut rows = Vec::new();
    let mut dim = None;
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| format!("cannot read {}", path.display()))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .with_context(|| format!("{}:{}: not a list of numbers", path.display(), lineno + 1))?;
        ensure!(row.iter().all(|v| v.is_finite()), "{}:{}: non-finite coordinate", path.display(), lineno + 1);
        match dim {
            None => dim = Some(row.len()),
            Some(d) => ensure!(
                row.len() == d,
                "{}:{}: expected {d} coordinates, found {}",
                path.display(),
                lineno + 1,
                row.len()
            ),
        }
        rows.push(row);
    }
    ensure!(!rows.is_empty(), "{} contains no points", path.display());
    Ok(rows)
}

/// Writes points in the format read by [`read_points`]; values are printed
/// in shortest round-trip form.
pub fn write_points<'a>(path: &Path, points: impl IntoIterator<Item = &'a Vec<f64>>) -> Result<()> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = BufWriter::new(file);
    for p in points {
        let line: Vec<String> = p.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(",")).with_context(|| format!("cannot write {}", path.display()))?;
    }
    w.flush().with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}
