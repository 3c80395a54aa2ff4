//! Labeled sample sets and the operations the experiments build on: CSV
//! ingestion, stratified three-way partitioning, genuine/impostor pair
//! construction, synthetic Gaussian mixtures and controlled subsetting.
//!
//! Every randomized operation takes an explicit seed and is a pure function
//! of its inputs.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::seed;

/// A feature matrix with one non-negative integer class label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<usize>,
    class_count: usize,
}

impl Dataset {
    pub fn new(features: Array2<f64>, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if features.nrows() == 0 {
            return Err(Error::EmptyInput("dataset has no rows".into()));
        }
        if features.ncols() == 0 {
            return Err(Error::config("dataset rows must have at least one feature"));
        }
        if labels.len() != features.nrows() {
            return Err(Error::DimensionMismatch {
                expected: features.nrows(),
                actual: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::config(format!("label {bad} outside [0, {class_count})")));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset features".into()));
        }
        Ok(Self {
            features,
            labels,
            class_count,
        })
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// Per-class row counts, indexed by class id.
    pub fn class_histogram(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Class ids with at least one row, ascending.
    pub fn present_classes(&self) -> Vec<usize> {
        self.class_histogram()
            .iter()
            .enumerate()
            .filter(|(_, &n)| n > 0)
            .map(|(c, _)| c)
            .collect()
    }

    /// Row indices grouped by class id.
    pub fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.class_count];
        for (i, &l) in self.labels.iter().enumerate() {
            groups[l].push(i);
        }
        groups
    }

    /// Rows in the given order (repeats allowed). Keeps `class_count`.
    pub fn select(&self, rows: &[usize]) -> Result<Dataset> {
        if rows.is_empty() {
            return Err(Error::EmptySelection("no rows selected".into()));
        }
        let features = self.features.select(Axis(0), rows);
        let labels = rows.iter().map(|&i| self.labels[i]).collect();
        Ok(Dataset {
            features,
            labels,
            class_count: self.class_count,
        })
    }

    /// Serializes as headerless CSV with the label in the last column.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for (row, &label) in self.features.rows().into_iter().zip(&self.labels) {
            for v in row {
                // `{:?}` is the shortest representation that round-trips.
                let _ = write!(out, "{v:?},");
            }
            let _ = writeln!(out, "{label}");
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }
}

/// Where the class label lives in a CSV row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelColumn {
    #[default]
    Last,
    Index(usize),
}

impl std::str::FromStr for LabelColumn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "last" => Ok(LabelColumn::Last),
            other => other
                .parse()
                .map(LabelColumn::Index)
                .map_err(|_| Error::config(format!("label column must be `last` or an index, got `{other}`"))),
        }
    }
}

/// Reads a dataset from a CSV file. See [`parse_csv`] for the format.
pub fn load_csv(path: impl AsRef<Path>, label_column: LabelColumn) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_csv(file, label_column)
}

/// Parses comma-separated samples, one per row. A single header line is
/// skipped when its first cell is not numeric. Rows and columns in error
/// messages are 1-based and count the header line if present.
pub fn parse_csv(reader: impl Read, label_column: LabelColumn) -> Result<Dataset> {
    let (features, labels) = read_table(reader, Some(label_column))?;
    let class_count = labels.iter().max().map_or(0, |&m| m + 1);
    Dataset::new(features, labels, class_count)
}

/// Reads an unlabeled CSV file. See [`parse_features`].
pub fn load_features(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_features(file)
}

/// Like [`parse_csv`] but every cell is a feature.
pub fn parse_features(reader: impl Read) -> Result<Array2<f64>> {
    Ok(read_table(reader, None)?.0)
}

fn read_table(reader: impl Read, label_column: Option<LabelColumn>) -> Result<(Array2<f64>, Vec<usize>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let min_cols = if label_column.is_some() { 2 } else { 1 };
    let mut values: Vec<f64> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut rows = 0usize;
    let mut width: Option<usize> = None;

    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Parse {
            row,
            column: 0,
            message: e.to_string(),
        })?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if i == 0 && record.get(0).is_some_and(|c| c.parse::<f64>().is_err()) {
            continue;
        }
        let cols = record.len();
        match width {
            None => {
                if cols < min_cols {
                    return Err(Error::Parse {
                        row,
                        column: 1,
                        message: "a row needs at least one feature and a label".into(),
                    });
                }
                width = Some(cols);
            }
            Some(w) if w != cols => {
                return Err(Error::Parse {
                    row,
                    column: cols.min(w) + 1,
                    message: format!("expected {w} cells, found {cols}"),
                });
            }
            Some(_) => {}
        }
        let label_idx = match label_column {
            None => None,
            Some(LabelColumn::Last) => Some(cols - 1),
            Some(LabelColumn::Index(k)) if k < cols => Some(k),
            Some(LabelColumn::Index(k)) => {
                return Err(Error::Parse {
                    row,
                    column: k + 1,
                    message: format!("label column {k} out of range for {cols} cells"),
                })
            }
        };
        for (j, cell) in record.iter().enumerate() {
            if Some(j) == label_idx {
                let label = cell.parse::<usize>().map_err(|_| Error::Parse {
                    row,
                    column: j + 1,
                    message: format!("label `{cell}` is not a non-negative integer"),
                })?;
                labels.push(label);
            } else {
                let v = cell
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse {
                        row,
                        column: j + 1,
                        message: format!("`{cell}` is not a finite number"),
                    })?;
                values.push(v);
            }
        }
        rows += 1;
    }

    let Some(width) = width else {
        return Err(Error::EmptyInput("CSV contains no samples".into()));
    };
    let feature_cols = width - usize::from(label_column.is_some());
    let features = Array2::from_shape_vec((rows, feature_cols), values).expect("row widths were checked");
    Ok((features, labels))
}

/// Disjoint generator / Siamese / evaluation partitions of one source set.
#[derive(Debug, Clone)]
pub struct DataSplit {
    pub generator_part: Dataset,
    pub siamese_part: Dataset,
    pub eval_part: Dataset,
    /// Source row indices of each part, ascending.
    pub indices: [Vec<usize>; 3],
    pub seed: u64,
}

/// Stratified three-way split. Per class, each part gets
/// `floor(fraction * n_c)` rows; the leftover rows go one at a time to
/// G, then S, then E.
pub fn split(data: &Dataset, fractions: (f64, f64, f64), seed: u64) -> Result<DataSplit> {
    let fr = [fractions.0, fractions.1, fractions.2];
    if fr.iter().any(|&f| !(f > 0.0 && f.is_finite())) {
        return Err(Error::config("split fractions must be positive"));
    }
    if (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::config("split fractions must sum to 1"));
    }

    let mut rng = seed::rng(seed);
    let mut parts: [Vec<usize>; 3] = Default::default();
    for (class, mut members) in data.indices_by_class().into_iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        let n = members.len();
        if n < 3 {
            return Err(Error::Stratification {
                class,
                count: n,
                parts: 3,
            });
        }
        members.shuffle(&mut rng);
        let mut counts = fr.map(|f| (f * n as f64).floor() as usize);
        let mut leftover = n - counts.iter().sum::<usize>();
        let mut k = 0;
        while leftover > 0 {
            counts[k % 3] += 1;
            leftover -= 1;
            k += 1;
        }
        let mut rest = members.as_slice();
        for (part, &c) in parts.iter_mut().zip(&counts) {
            let (head, tail) = rest.split_at(c);
            part.extend_from_slice(head);
            rest = tail;
        }
    }
    for p in parts.iter_mut() {
        p.sort_unstable();
    }
    let [g, s, e] = &parts;
    for (name, idx) in [("generator", g), ("siamese", s), ("evaluation", e)] {
        if idx.is_empty() {
            return Err(Error::EmptySelection(format!("{name} partition is empty")));
        }
    }
    Ok(DataSplit {
        generator_part: data.select(g)?,
        siamese_part: data.select(s)?,
        eval_part: data.select(e)?,
        indices: parts,
        seed,
    })
}

/// Two row indices and whether they share a class (`genuine`, Y = 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SamplePair {
    pub index_a: usize,
    pub index_b: usize,
    pub genuine: bool,
}

impl SamplePair {
    pub fn target(&self) -> f64 {
        if self.genuine {
            1.0
        } else {
            0.0
        }
    }
}

/// Pairs addressing rows of the dataset they were built from.
#[derive(Debug, Clone)]
pub struct PairBatch<'a> {
    pairs: Vec<SamplePair>,
    source: &'a Dataset,
}

impl<'a> PairBatch<'a> {
    pub fn new(source: &'a Dataset, pairs: Vec<SamplePair>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Pairing("pair batch is empty".into()));
        }
        for p in &pairs {
            if p.index_a >= source.len() || p.index_b >= source.len() {
                return Err(Error::Pairing(format!(
                    "pair ({}, {}) out of range for {} rows",
                    p.index_a,
                    p.index_b,
                    source.len()
                )));
            }
            if p.index_a == p.index_b {
                return Err(Error::Pairing(format!("pair repeats index {}", p.index_a)));
            }
            let same = source.labels[p.index_a] == source.labels[p.index_b];
            if same != p.genuine {
                return Err(Error::Pairing(format!(
                    "pair ({}, {}) is mislabeled",
                    p.index_a, p.index_b
                )));
            }
        }
        Ok(Self { pairs, source })
    }

    pub fn pairs(&self) -> &[SamplePair] {
        &self.pairs
    }

    pub fn source(&self) -> &'a Dataset {
        self.source
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// A sub-batch over a contiguous range of pairs.
    pub fn slice(&self, range: std::ops::Range<usize>) -> PairBatch<'a> {
        PairBatch {
            pairs: self.pairs[range].to_vec(),
            source: self.source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairCount {
    /// Every unordered pair `(i, j)`, `i < j`, in lexicographic order.
    Exhaustive,
    Sampled(usize),
}

/// Builds genuine (same-class) and impostor (cross-class) pairs.
///
/// In sampled mode `round(n * genuine_fraction)` pairs are genuine: a row is
/// drawn uniformly among rows whose class has a second member, then a partner
/// uniformly from the rest of its class. Impostor pairs draw a row uniformly
/// and a partner uniformly from the other classes. The batch is shuffled.
pub fn make_pairs(data: &Dataset, count: PairCount, genuine_fraction: f64, seed: u64) -> Result<PairBatch<'_>> {
    let labels = data.labels();
    let n = labels.len();
    if n < 2 {
        return Err(Error::Pairing("need at least two samples".into()));
    }

    let pairs = match count {
        PairCount::Exhaustive => {
            let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
            for a in 0..n {
                for b in a + 1..n {
                    pairs.push(SamplePair {
                        index_a: a,
                        index_b: b,
                        genuine: labels[a] == labels[b],
                    });
                }
            }
            pairs
        }
        PairCount::Sampled(total) => {
            if !(genuine_fraction > 0.0 && genuine_fraction < 1.0) {
                return Err(Error::config("genuine fraction must lie in (0, 1)"));
            }
            if total == 0 {
                return Err(Error::Pairing("pair count must be positive".into()));
            }
            let n_genuine = (total as f64 * genuine_fraction).round() as usize;
            let n_impostor = total - n_genuine;
            let groups = data.indices_by_class();
            let classes_present = groups.iter().filter(|g| !g.is_empty()).count();
            if n_impostor > 0 && classes_present < 2 {
                return Err(Error::Pairing("impostor pairs need at least two classes".into()));
            }
            let anchors: Vec<usize> = (0..n).filter(|&i| groups[labels[i]].len() >= 2).collect();
            if n_genuine > 0 && anchors.is_empty() {
                return Err(Error::Pairing("genuine pairs need a class with two samples".into()));
            }

            let mut rng = seed::rng(seed);
            let mut pairs = Vec::with_capacity(total);
            for _ in 0..n_genuine {
                let a = anchors[rng.gen_range(0..anchors.len())];
                let group = &groups[labels[a]];
                let b = loop {
                    let b = group[rng.gen_range(0..group.len())];
                    if b != a {
                        break b;
                    }
                };
                pairs.push(SamplePair {
                    index_a: a,
                    index_b: b,
                    genuine: true,
                });
            }
            for _ in 0..n_impostor {
                let a = rng.gen_range(0..n);
                let b = loop {
                    let b = rng.gen_range(0..n);
                    if labels[b] != labels[a] {
                        break b;
                    }
                };
                pairs.push(SamplePair {
                    index_a: a,
                    index_b: b,
                    genuine: false,
                });
            }
            pairs.shuffle(&mut rng);
            pairs
        }
    };
    PairBatch::new(data, pairs)
}

/// Parameters of an isotropic Gaussian mixture with class means spread
/// evenly on a circle in the first two coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSpec {
    pub class_count: usize,
    pub dimension: usize,
    pub mode_radius: f64,
    pub within_sigma: f64,
    pub per_class_count: usize,
    pub seed: u64,
}

impl MixtureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.class_count == 0 {
            return Err(Error::config("mixture needs at least one class"));
        }
        if self.dimension == 0 {
            return Err(Error::config("mixture dimension must be at least 1"));
        }
        if !(self.within_sigma > 0.0 && self.within_sigma.is_finite()) {
            return Err(Error::config("mixture sigma must be positive"));
        }
        if !(self.mode_radius >= 0.0 && self.mode_radius.is_finite()) {
            return Err(Error::config("mixture radius must be non-negative"));
        }
        if self.per_class_count == 0 {
            return Err(Error::config("mixture needs at least one sample per class"));
        }
        Ok(())
    }

    /// Mean of class `c`.
    pub fn class_mean(&self, c: usize) -> Vec<f64> {
        let angle = 2.0 * std::f64::consts::PI * c as f64 / self.class_count as f64;
        let mut mean = vec![0.0; self.dimension];
        mean[0] = self.mode_radius * angle.cos();
        if self.dimension > 1 {
            mean[1] = self.mode_radius * angle.sin();
        }
        mean
    }
}

/// Samples a mixture; rows are grouped by class in ascending class order.
pub fn gen_mixture(spec: &MixtureSpec) -> Result<Dataset> {
    spec.validate()?;
    let n = spec.class_count * spec.per_class_count;
    let mut rng = seed::rng(spec.seed);
    let mut features = Array2::zeros((n, spec.dimension));
    let mut labels = Vec::with_capacity(n);
    for c in 0..spec.class_count {
        let mean = spec.class_mean(c);
        for k in 0..spec.per_class_count {
            let mut row = features.row_mut(c * spec.per_class_count + k);
            for (x, m) in row.iter_mut().zip(&mean) {
                let z: f64 = StandardNormal.sample(&mut rng);
                *x = m + spec.within_sigma * z;
            }
            labels.push(c);
        }
    }
    Dataset::new(features, labels, spec.class_count)
}

/// Keeps the rows whose label is in `keep`. Labels are not re-indexed.
pub fn filter_classes(data: &Dataset, keep: &BTreeSet<usize>) -> Result<Dataset> {
    if keep.is_empty() {
        return Err(Error::EmptySelection("no classes to keep".into()));
    }
    if let Some(&bad) = keep.iter().find(|&&c| c >= data.class_count()) {
        return Err(Error::EmptySelection(format!(
            "class {bad} outside [0, {})",
            data.class_count()
        )));
    }
    let rows: Vec<usize> = (0..data.len()).filter(|&i| keep.contains(&data.labels()[i])).collect();
    if rows.is_empty() {
        return Err(Error::EmptySelection(format!("no rows with labels in {keep:?}")));
    }
    data.select(&rows)
}

/// Emulates intra-class collapse. For every present class the rows are
/// shuffled and the first `ceil(p * n_c)` form the pool; `per_class` rows are
/// then emitted from that pool. When the pool holds at least `per_class` rows
/// they are drawn without repetition; otherwise every pool row appears once
/// and the remainder is drawn uniformly with replacement.
pub fn subsample_per_class(data: &Dataset, fraction: f64, per_class: usize, seed: u64) -> Result<Dataset> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::config("subsample fraction must lie in (0, 1]"));
    }
    if per_class == 0 {
        return Err(Error::config("per-class target must be positive"));
    }
    let mut rng = seed::rng(seed);
    let mut rows = Vec::new();
    for (class, mut members) in data.indices_by_class().into_iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        let pool_size = (fraction * members.len() as f64).ceil() as usize;
        if pool_size == 0 {
            return Err(Error::EmptySelection(format!("class {class} pool is empty")));
        }
        members.shuffle(&mut rng);
        let pool = &members[..pool_size];
        if pool.len() >= per_class {
            rows.extend_from_slice(&pool[..per_class]);
        } else {
            rows.extend_from_slice(pool);
            for _ in pool.len()..per_class {
                rows.push(pool[rng.gen_range(0..pool.len())]);
            }
        }
    }
    data.select(&rows)
}

/// Adds i.i.d. `N(0, sigma^2)` noise to every feature.
pub fn degrade(data: &Dataset, noise_sigma: f64, seed: u64) -> Result<Dataset> {
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::config("noise sigma must be non-negative"));
    }
    if noise_sigma == 0.0 {
        return Ok(data.clone());
    }
    let mut rng = seed::rng(seed);
    let mut out = data.clone();
    for x in out.features.iter_mut() {
        let z: f64 = StandardNormal.sample(&mut rng);
        *x += noise_sigma * z;
    }
    Ok(out)
}
