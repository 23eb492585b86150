//! Point sets in R^m: CSV ingestion, standardization, synthetic 2-D shapes and
//! cached retrieval of the UCI datasets used for the complexity plots.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Record of what was done to the raw table on the way in.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Preprocessing {
    pub dropped_columns: Vec<String>,
    pub dropped_rows: usize,
    /// Per retained column, `raw = value * scale + center`.
    pub center: Option<Vec<f64>>,
    pub scale: Option<Vec<f64>>,
}

/// `n` points in R^m, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    values: Vec<f64>,
    n: usize,
    m: usize,
    pub column_names: Vec<String>,
    pub preprocessing: Preprocessing,
}

impl DataSet {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.first().map_or(0, Vec::len);
        let names = (0..m).map(|j| format!("x{}", j + 1)).collect();
        Self::from_rows_named(rows, names)
    }

    pub fn from_rows_named(rows: &[Vec<f64>], column_names: Vec<String>) -> Result<Self> {
        let m = column_names.len();
        if m == 0 {
            return Err(Error::Data("dataset needs at least one column".into()));
        }
        let mut values = Vec::with_capacity(rows.len() * m);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != m {
                return Err(Error::Data(format!("row {i} has {} values, expected {m}", r.len())));
            }
            if r.iter().any(|x| !x.is_finite()) {
                return Err(Error::Data(format!("row {i} has a non-finite value")));
            }
            values.extend_from_slice(r);
        }
        Ok(Self {
            values,
            n: rows.len(),
            m,
            column_names,
            preprocessing: Preprocessing::default(),
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.values[i * self.m..(i + 1) * self.m]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.m.max(1)).take(self.n)
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.points().map(<[f64]>::to_vec).collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut mu = vec![0.0; self.m];
        for p in self.points() {
            for (a, x) in mu.iter_mut().zip(p) {
                *a += x;
            }
        }
        mu.iter_mut().for_each(|a| *a /= self.n as f64);
        mu
    }

    /// Mean squared distance of the points to their mean (divide-by-n).
    pub fn total_variance(&self) -> f64 {
        let mu = self.mean();
        self.points().map(|p| sq_dist(p, &mu)).sum::<f64>() / self.n as f64
    }

    /// Covariance matrix (divide-by-n), row-major m×m.
    pub fn covariance(&self) -> Vec<f64> {
        let mu = self.mean();
        let m = self.m;
        let mut c = vec![0.0; m * m];
        for p in self.points() {
            for a in 0..m {
                let da = p[a] - mu[a];
                for b in a..m {
                    c[a * m + b] += da * (p[b] - mu[b]);
                }
            }
        }
        for a in 0..m {
            for b in a..m {
                c[a * m + b] /= self.n as f64;
                c[b * m + a] = c[a * m + b];
            }
        }
        c
    }

    /// Bounding-box diagonal; the length scale used for convergence tests.
    pub fn extent(&self) -> f64 {
        crate::graph::bounding_diagonal(self.points(), self.m)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.column_names)?;
        for p in self.points() {
            w.write_record(p.iter().map(|x| format!("{x:?}")))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// How to read a CSV table.
#[derive(Debug, Clone)]
pub struct CsvOptions {
    pub has_header: bool,
    /// Names to use when the file has no header row.
    pub column_names: Option<Vec<String>>,
    /// Keep only these columns (by name); `None` keeps every numeric column.
    pub columns: Option<Vec<String>>,
    /// Columns to discard before type detection.
    pub drop: Vec<String>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            has_header: true,
            column_names: None,
            columns: None,
            drop: Vec::new(),
        }
    }
}

fn is_missing(cell: &str) -> bool {
    matches!(cell.trim(), "" | "?" | "NA" | "NaN" | "nan" | "null")
}

pub fn load_csv(path: impl AsRef<Path>, options: &CsvOptions) -> Result<DataSet> {
    let path = path.as_ref();
    let file = fs::File::open(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    read_csv(file, options)
}

/// Parses a table, keeping numeric columns and dropping rows with missing values.
pub fn read_csv<R: Read>(reader: R, options: &CsvOptions) -> Result<DataSet> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(options.has_header)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let records: Vec<csv::StringRecord> = rdr
        .records()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Data(format!("unparseable CSV: {e}")))?;
    let width = records.first().map_or(0, csv::StringRecord::len);
    let header: Vec<String> = if options.has_header {
        rdr.headers()
            .map_err(|e| Error::Data(format!("unparseable CSV header: {e}")))?
            .iter()
            .map(str::to_string)
            .collect()
    } else if let Some(names) = &options.column_names {
        names.clone()
    } else {
        (0..width).map(|j| format!("x{}", j + 1)).collect()
    };
    if records.iter().any(|r| r.len() != header.len()) {
        return Err(Error::Data("ragged CSV: rows differ in length from the header".into()));
    }

    let mut dropped_columns = Vec::new();
    let mut keep = Vec::new();
    for (j, name) in header.iter().enumerate() {
        if options.drop.contains(name) {
            dropped_columns.push(name.clone());
            continue;
        }
        if let Some(sel) = &options.columns {
            if !sel.contains(name) {
                continue;
            }
        }
        let numeric = records
            .iter()
            .map(|r| &r[j])
            .filter(|c| !is_missing(c))
            .all(|c| c.parse::<f64>().is_ok());
        if numeric {
            keep.push(j);
        } else {
            info!("dropping non-numeric column {name:?}");
            dropped_columns.push(name.clone());
        }
    }
    if let Some(sel) = &options.columns {
        for want in sel {
            if !header.contains(want) {
                return Err(Error::Data(format!("column {want:?} not found")));
            }
        }
    }
    if keep.is_empty() {
        return Err(Error::Data("no numeric columns".into()));
    }

    let mut rows = Vec::with_capacity(records.len());
    let mut dropped_rows = 0;
    for r in &records {
        let parsed: Option<Vec<f64>> = keep
            .iter()
            .map(|&j| {
                let c = &r[j];
                if is_missing(c) {
                    None
                } else {
                    c.parse::<f64>().ok().filter(|x| x.is_finite())
                }
            })
            .collect();
        match parsed {
            Some(row) => rows.push(row),
            None => dropped_rows += 1,
        }
    }
    if dropped_rows > 0 {
        warn!("dropped {dropped_rows} rows with missing values");
    }
    if rows.len() < 2 {
        return Err(Error::Data(format!("need at least 2 complete rows, found {}", rows.len())));
    }
    let names = keep.iter().map(|&j| header[j].clone()).collect();
    let mut data = DataSet::from_rows_named(&rows, names)?;
    data.preprocessing.dropped_columns = dropped_columns;
    data.preprocessing.dropped_rows = dropped_rows;
    Ok(data)
}

/// Z-scores every column (population standard deviation). Constant columns are
/// dropped with a warning. The transform record composes with any earlier one,
/// so [`inverse_standardize`] always returns to the raw units.
pub fn standardize(data: &DataSet) -> Result<DataSet> {
    let mu = data.mean();
    let n = data.len() as f64;
    let mut sd = vec![0.0; data.dim()];
    for p in data.points() {
        for j in 0..data.dim() {
            sd[j] += (p[j] - mu[j]) * (p[j] - mu[j]);
        }
    }
    sd.iter_mut().for_each(|s| *s = (*s / n).sqrt());

    let max_sd = sd.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..data.dim())
        .filter(|&j| {
            let constant = sd[j] <= 1e-12 * max_sd.max(f64::MIN_POSITIVE) || sd[j] == 0.0;
            if constant {
                warn!("dropping zero-variance column {:?}", data.column_names[j]);
            }
            !constant
        })
        .collect();
    if keep.is_empty() {
        return Err(Error::ZeroVariance);
    }

    let rows: Vec<Vec<f64>> = data
        .points()
        .map(|p| keep.iter().map(|&j| (p[j] - mu[j]) / sd[j]).collect())
        .collect();
    let names = keep.iter().map(|&j| data.column_names[j].clone()).collect();
    let mut out = DataSet::from_rows_named(&rows, names)?;

    let prev = &data.preprocessing;
    let (c0, s0): (Vec<f64>, Vec<f64>) = match (&prev.center, &prev.scale) {
        (Some(c), Some(s)) => (c.clone(), s.clone()),
        _ => (vec![0.0; data.dim()], vec![1.0; data.dim()]),
    };
    let mut dropped = prev.dropped_columns.clone();
    dropped.extend(
        (0..data.dim())
            .filter(|j| !keep.contains(j))
            .map(|j| data.column_names[j].clone()),
    );
    out.preprocessing = Preprocessing {
        dropped_columns: dropped,
        dropped_rows: prev.dropped_rows,
        center: Some(keep.iter().map(|&j| mu[j] * s0[j] + c0[j]).collect()),
        scale: Some(keep.iter().map(|&j| sd[j] * s0[j]).collect()),
    };
    Ok(out)
}

/// Maps standardized data back to raw units using its transform record.
pub fn inverse_standardize(data: &DataSet) -> Result<DataSet> {
    let (Some(center), Some(scale)) = (&data.preprocessing.center, &data.preprocessing.scale) else {
        return Ok(data.clone());
    };
    let rows: Vec<Vec<f64>> = data
        .points()
        .map(|p| p.iter().enumerate().map(|(j, x)| x * scale[j] + center[j]).collect())
        .collect();
    let mut out = DataSet::from_rows_named(&rows, data.column_names.clone())?;
    out.preprocessing.dropped_columns = data.preprocessing.dropped_columns.clone();
    out.preprocessing.dropped_rows = data.preprocessing.dropped_rows;
    Ok(out)
}

/// Synthetic 2-D test shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Linear,
    Arc,
    Star,
    Treelike,
}

impl std::str::FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Shape::Linear),
            "arc" => Ok(Shape::Arc),
            "star" => Ok(Shape::Star),
            "treelike" | "tree" => Ok(Shape::Treelike),
            other => Err(Error::Config(format!("unknown shape {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub shape: Shape,
    pub n_points: usize,
    /// Gaussian scatter, as a fraction of the shape's unit scale.
    pub noise_sd: f64,
    /// Branch count for [`Shape::Star`].
    pub branches: usize,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn new(shape: Shape, n_points: usize, noise_sd: f64, seed: u64) -> Self {
        Self {
            shape,
            n_points,
            noise_sd,
            branches: 3,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_points < 10 {
            return Err(Error::Config("generator needs at least 10 points".into()));
        }
        if !(self.noise_sd >= 0.0) || !self.noise_sd.is_finite() {
            return Err(Error::Config("noise must be a finite non-negative number".into()));
        }
        if self.shape == Shape::Star && self.branches < 2 {
            return Err(Error::Config("a star needs at least 2 branches".into()));
        }
        Ok(())
    }

    /// Line segments making up the noiseless skeleton, each tagged with a branch label.
    pub fn skeleton(&self) -> Vec<([f64; 2], [f64; 2])> {
        match self.shape {
            Shape::Linear => vec![([0.0, 0.0], [1.0, 0.0])],
            Shape::Arc => Vec::new(),
            Shape::Star => (0..self.branches)
                .map(|j| {
                    let a = std::f64::consts::FRAC_PI_2
                        + std::f64::consts::TAU * j as f64 / self.branches as f64;
                    ([0.0, 0.0], [a.cos(), a.sin()])
                })
                .collect(),
            Shape::Treelike => vec![
                // 4-star at the origin
                ([0.0, 0.0], [0.0, 1.0]),
                ([0.0, 0.0], [0.0, -1.0]),
                ([0.0, 0.0], [-1.0, 0.0]),
                ([0.0, 0.0], [1.0, 0.0]),
                // 3-star at the top
                ([0.0, 1.0], [-0.5, 1.6]),
                ([0.0, 1.0], [0.5, 1.6]),
                // 3-star on the right
                ([1.0, 0.0], [1.6, 0.5]),
                ([1.0, 0.0], [1.6, -0.5]),
            ],
        }
    }
}

const ARC_START: f64 = std::f64::consts::PI / 6.0;
const ARC_END: f64 = 5.0 * std::f64::consts::PI / 6.0;

/// Draws a seeded point cloud. The generator is ChaCha8 seeded with
/// `seed_from_u64`, so output is identical across runs and platforms.
pub fn generate(spec: &GeneratorSpec) -> Result<DataSet> {
    generate_labeled(spec).map(|(d, _)| d)
}

/// Like [`generate`], also returning the skeleton segment each point was drawn from.
pub fn generate_labeled(spec: &GeneratorSpec) -> Result<(DataSet, Vec<usize>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut rows = Vec::with_capacity(spec.n_points);
    let mut labels = Vec::with_capacity(spec.n_points);
    let segments = spec.skeleton();
    let lengths: Vec<f64> = segments
        .iter()
        .map(|(a, b)| sq_dist(a, b).sqrt())
        .collect();
    let total: f64 = lengths.iter().sum();
    for _ in 0..spec.n_points {
        let (mut p, label) = if spec.shape == Shape::Arc {
            let t: f64 = rng.random();
            let a = ARC_START + t * (ARC_END - ARC_START);
            ([a.cos(), a.sin()], 0)
        } else {
            let mut s = rng.random::<f64>() * total;
            let mut k = 0;
            while k + 1 < segments.len() && s >= lengths[k] {
                s -= lengths[k];
                k += 1;
            }
            let t = (s / lengths[k]).clamp(0.0, 1.0);
            let (a, b) = segments[k];
            ([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])], k)
        };
        for x in &mut p {
            let z: f64 = rng.sample(StandardNormal);
            *x += spec.noise_sd * z;
        }
        rows.push(p.to_vec());
        labels.push(label);
    }
    let data = DataSet::from_rows_named(&rows, vec!["x".into(), "y".into()])?;
    Ok((data, labels))
}

/// The four UCI tables used for the complexity plots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UciDataset {
    Iris,
    Wine,
    ForestFires,
    Abalone,
}

impl std::str::FromStr for UciDataset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iris" => Ok(Self::Iris),
            "wine" => Ok(Self::Wine),
            "forestfires" => Ok(Self::ForestFires),
            "abalone" => Ok(Self::Abalone),
            other => Err(Error::Config(format!("unknown UCI dataset {other:?}"))),
        }
    }
}

const UCI_BASE: &str = "https://archive.ics.uci.edu/ml/machine-learning-databases";

impl UciDataset {
    pub fn name(self) -> &'static str {
        match self {
            Self::Iris => "iris",
            Self::Wine => "wine",
            Self::ForestFires => "forestfires",
            Self::Abalone => "abalone",
        }
    }

    pub fn file_name(self) -> &'static str {
        match self {
            Self::Iris => "iris.data",
            Self::Wine => "wine.data",
            Self::ForestFires => "forestfires.csv",
            Self::Abalone => "abalone.data",
        }
    }

    pub fn url(self) -> String {
        let dir = match self {
            Self::Iris => "iris",
            Self::Wine => "wine",
            Self::ForestFires => "forest-fires",
            Self::Abalone => "abalone",
        };
        format!("{UCI_BASE}/{dir}/{}", self.file_name())
    }

    /// Column layout and the class/categorical columns that are discarded.
    pub fn csv_options(self) -> CsvOptions {
        let names = |v: &[&str]| Some(v.iter().map(|s| s.to_string()).collect());
        let drop = |v: &[&str]| v.iter().map(|s| s.to_string()).collect();
        match self {
            Self::Iris => CsvOptions {
                has_header: false,
                column_names: names(&["sepal_length", "sepal_width", "petal_length", "petal_width", "class"]),
                columns: None,
                drop: drop(&["class"]),
            },
            Self::Wine => CsvOptions {
                has_header: false,
                column_names: names(&[
                    "class",
                    "alcohol",
                    "malic_acid",
                    "ash",
                    "alcalinity_of_ash",
                    "magnesium",
                    "total_phenols",
                    "flavanoids",
                    "nonflavanoid_phenols",
                    "proanthocyanins",
                    "color_intensity",
                    "hue",
                    "od280_od315",
                    "proline",
                ]),
                columns: None,
                drop: drop(&["class"]),
            },
            Self::Abalone => CsvOptions {
                has_header: false,
                column_names: names(&[
                    "sex",
                    "length",
                    "diameter",
                    "height",
                    "whole_weight",
                    "shucked_weight",
                    "viscera_weight",
                    "shell_weight",
                    "rings",
                ]),
                columns: None,
                drop: drop(&["sex"]),
            },
            Self::ForestFires => CsvOptions {
                has_header: true,
                column_names: None,
                columns: None,
                drop: drop(&["month", "day"]),
            },
        }
    }
}

/// Environment variable overriding the UCI cache directory.
pub const CACHE_DIR_ENV: &str = "PGRAPH_CACHE_DIR";

pub fn default_cache_dir() -> PathBuf {
    if let Some(dir) = std::env::var_os(CACHE_DIR_ENV) {
        return PathBuf::from(dir);
    }
    match std::env::var_os("HOME") {
        Some(home) => PathBuf::from(home).join(".cache").join("pgraph"),
        None => PathBuf::from(".pgraph-cache"),
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes `bytes` next to `path` under a unique name and renames it into place,
/// so concurrent fetches never observe a half-written file.
fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let tmp = dir.join(format!(
        ".{}.{}.tmp",
        path.file_name().and_then(|s| s.to_str()).unwrap_or("download"),
        std::process::id()
    ));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Where [`fetch_uci`] keeps a dataset: `<cache_dir>/<name>/<file>`.
pub fn uci_cache_path(name: UciDataset, cache_dir: &Path) -> PathBuf {
    cache_dir.join(name.name()).join(name.file_name())
}

/// Returns the raw (unstandardized) numeric table, downloading it into the
/// cache on first use. A `.sha256` sidecar is written with the download and
/// checked on every later call.
pub fn fetch_uci(name: UciDataset, cache_dir: &Path) -> Result<DataSet> {
    let path = uci_cache_path(name, cache_dir);
    let sidecar = path.with_file_name(format!("{}.sha256", name.file_name()));
    let bytes = if path.exists() {
        let bytes = fs::read(&path)?;
        let found = sha256_hex(&bytes);
        match fs::read_to_string(&sidecar) {
            Ok(expected) => {
                let expected = expected.trim().to_string();
                if expected != found {
                    return Err(Error::Checksum {
                        path,
                        expected,
                        found,
                    });
                }
            }
            Err(_) => atomic_write(&sidecar, format!("{found}\n").as_bytes())?,
        }
        bytes
    } else {
        fs::create_dir_all(path.parent().expect("cache path has a parent"))?;
        let url = name.url();
        info!("downloading {url}");
        let bytes = download(&url)?;
        atomic_write(&path, &bytes)?;
        atomic_write(&sidecar, format!("{}\n", sha256_hex(&bytes)).as_bytes())?;
        bytes
    };
    read_csv(bytes.as_slice(), &name.csv_options())
}

fn download(url: &str) -> Result<Vec<u8>> {
    let mut response = ureq::get(url)
        .call()
        .map_err(|e| Error::Network(format!("{url}: {e}")))?;
    response
        .body_mut()
        .with_config()
        .limit(64 * 1024 * 1024)
        .read_to_vec()
        .map_err(|e| Error::Network(format!("{url}: {e}")))
}
