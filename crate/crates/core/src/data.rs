//! In-memory datasets, splits, stratified subsampling and the synthetic
//! image tasks used for desk-scale experiments.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{contract, Result};
use crate::matrix::Matrix;
use crate::rng::RngState;

/// One split of a dataset. `source` holds the row index of every example
/// in the original (pre-split, pre-subsample) numbering.
#[derive(Clone, Debug, PartialEq)]
pub struct Subset {
    pub x: Matrix,
    pub y: Option<Vec<usize>>,
    pub source: Vec<usize>,
}

impl Subset {
    pub fn new(x: Matrix, y: Option<Vec<usize>>, source: Vec<usize>) -> Result<Self> {
        if source.len() != x.rows() || y.as_ref().is_some_and(|y| y.len() != x.rows()) {
            return contract("subset rows, labels and source indices differ in length");
        }
        Ok(Subset { x, y, source })
    }

    pub fn empty(cols: usize, labeled: bool) -> Self {
        Subset {
            x: Matrix::zeros(0, cols),
            y: labeled.then(Vec::new),
            source: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn labels(&self) -> Result<&[usize]> {
        self.y.as_deref().ok_or_else(|| crate::Error::Contract("subset has no labels".into()))
    }

    pub fn select(&self, rows: &[usize]) -> Subset {
        Subset {
            x: self.x.select_rows(rows),
            y: self.y.as_ref().map(|y| rows.iter().map(|&i| y[i]).collect()),
            source: rows.iter().map(|&i| self.source[i]).collect(),
        }
    }

    fn concat(parts: &[&Subset]) -> Result<Subset> {
        let cols = parts[0].x.cols();
        let mut data = Vec::new();
        let mut y = parts[0].y.as_ref().map(|_| Vec::new());
        let mut source = Vec::new();
        for p in parts {
            data.extend_from_slice(p.x.as_slice());
            source.extend_from_slice(&p.source);
            if let (Some(out), Some(py)) = (y.as_mut(), p.y.as_ref()) {
                out.extend_from_slice(py);
            }
        }
        Subset::new(Matrix::from_vec(source.len(), cols, data)?, y, source)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Part {
    Train,
    Valid,
    Test,
}

/// Design matrix in `[0,1]^d` with optional labels, split three ways.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    /// Number of classes; zero for unlabeled data.
    pub classes: usize,
    pub train: Subset,
    pub valid: Subset,
    pub test: Subset,
}

impl Dataset {
    pub fn new(name: impl Into<String>, classes: usize, train: Subset, valid: Subset, test: Subset) -> Result<Self> {
        let ds = Dataset {
            name: name.into(),
            classes,
            train,
            valid,
            test,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Splits consecutive rows: the first `n_train` train, the next
    /// `n_valid` validation, the rest test.
    pub fn from_rows(
        name: impl Into<String>,
        x: Matrix,
        y: Option<Vec<usize>>,
        classes: usize,
        n_train: usize,
        n_valid: usize,
    ) -> Result<Self> {
        let n = x.rows();
        if n_train + n_valid > n {
            return contract(format!("split {n_train}+{n_valid} exceeds {n} rows"));
        }
        let all = Subset::new(x, y, (0..n).collect())?;
        let idx: Vec<usize> = (0..n).collect();
        Dataset::new(
            name,
            classes,
            all.select(&idx[..n_train]),
            all.select(&idx[n_train..n_train + n_valid]),
            all.select(&idx[n_train + n_valid..]),
        )
    }

    fn validate(&self) -> Result<()> {
        let d = self.train.x.cols();
        for (part, s) in self.parts() {
            if s.x.cols() != d {
                return contract(format!("{part:?} split has width {} but train has {d}", s.x.cols()));
            }
            if let Some(v) = s.x.as_slice().iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return contract(format!("{part:?} split has feature {v} outside [0,1]"));
            }
            if let Some(y) = &s.y {
                if let Some(bad) = y.iter().find(|&&c| c >= self.classes) {
                    return contract(format!("{part:?} label {bad} outside 0..{}", self.classes));
                }
            }
        }
        let mut seen: Vec<usize> = self.parts().iter().flat_map(|(_, s)| s.source.iter().copied()).collect();
        let total = seen.len();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != total {
            return contract("split index sets overlap");
        }
        Ok(())
    }

    pub fn parts(&self) -> [(Part, &Subset); 3] {
        [(Part::Train, &self.train), (Part::Valid, &self.valid), (Part::Test, &self.test)]
    }

    pub fn part(&self, part: Part) -> &Subset {
        match part {
            Part::Train => &self.train,
            Part::Valid => &self.valid,
            Part::Test => &self.test,
        }
    }

    pub fn dim(&self) -> usize {
        self.train.x.cols()
    }

    pub fn is_labeled(&self) -> bool {
        self.train.y.is_some()
    }

    /// Re-partitions all rows (train, then valid, then test order).
    pub fn with_split(&self, n_train: usize, n_valid: usize) -> Result<Dataset> {
        let all = Subset::concat(&[&self.train, &self.valid, &self.test])?;
        let n = all.len();
        if n_train + n_valid > n {
            return contract(format!("split {n_train}+{n_valid} exceeds {n} rows"));
        }
        let idx: Vec<usize> = (0..n).collect();
        Dataset::new(
            self.name.clone(),
            self.classes,
            all.select(&idx[..n_train]),
            all.select(&idx[n_train..n_train + n_valid]),
            all.select(&idx[n_train + n_valid..]),
        )
    }

    /// Adds clipped Gaussian pixel noise to every split.
    pub fn with_pixel_noise(&self, stddev: f64, rng: &mut RngState) -> Result<Dataset> {
        let mut out = self.clone();
        for s in [&mut out.train, &mut out.valid, &mut out.test] {
            let noise = crate::rng::gaussian_sample(rng, s.x.rows(), s.x.cols(), 0.0, stddev)?;
            s.x = s.x.zip_map(&noise, |v, e| (v + e).clamp(0.0, 1.0))?;
        }
        out.name = format!("{}+noise{stddev}", self.name);
        Ok(out)
    }
}

/// Picks `n` of the rows of `subset`, stratified by label when labels exist.
/// Per-class counts use largest remainders, so every class is within one
/// example of its proportional share. Selected rows keep their order.
fn stratified_pick(subset: &Subset, n: usize, classes: usize, rng: &mut RngState) -> Result<Vec<usize>> {
    let total = subset.len();
    if n > total {
        return contract(format!("requested {n} examples but only {total} available"));
    }
    let mut picked = match &subset.y {
        None => {
            let mut perm = rng.permutation(total);
            perm.truncate(n);
            perm
        }
        Some(y) => {
            let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes.max(1)];
            for (i, &c) in y.iter().enumerate() {
                by_class[c].push(i);
            }
            let quotas: Vec<(usize, u128)> = by_class
                .iter()
                .map(|members| {
                    let exact = n as u128 * members.len() as u128;
                    ((exact / total.max(1) as u128) as usize, exact % total.max(1) as u128)
                })
                .collect();
            let mut counts: Vec<usize> = quotas.iter().map(|q| q.0).collect();
            let mut remaining = n - counts.iter().sum::<usize>();
            let mut order: Vec<usize> = (0..counts.len()).collect();
            order.sort_by(|&a, &b| quotas[b].1.cmp(&quotas[a].1).then(a.cmp(&b)));
            for &c in order.iter().cycle() {
                if remaining == 0 {
                    break;
                }
                if counts[c] < by_class[c].len() {
                    counts[c] += 1;
                    remaining -= 1;
                }
            }
            let mut out = Vec::with_capacity(n);
            for (members, &k) in by_class.iter_mut().zip(&counts) {
                rng.shuffle(members);
                out.extend_from_slice(&members[..k]);
            }
            out
        }
    };
    picked.sort_unstable();
    Ok(picked)
}

/// Deterministic, label-stratified reduction of the train and validation
/// splits. The test split is kept whole.
pub fn subsample(dataset: &Dataset, n_train: usize, n_valid: usize, seed: u64) -> Result<Dataset> {
    let master = RngState::new(seed);
    let tr = stratified_pick(&dataset.train, n_train, dataset.classes, &mut master.split(0))?;
    let va = stratified_pick(&dataset.valid, n_valid, dataset.classes, &mut master.split(1))?;
    Dataset::new(
        dataset.name.clone(),
        dataset.classes,
        dataset.train.select(&tr),
        dataset.valid.select(&va),
        dataset.test.clone(),
    )
}

fn unsplit(name: &str, x: Matrix, y: Vec<usize>) -> Result<Dataset> {
    let n = x.rows();
    let cols = x.cols();
    Dataset::new(
        name,
        2,
        Subset::new(x, Some(y), (0..n).collect())?,
        Subset::empty(cols, true),
        Subset::empty(cols, true),
    )
}

/// Binary `side × side` images of parallel bars: label 0 horizontal, 1
/// vertical. Each interior row (or column) is lit with probability 0.3, at
/// least one per image; the two border lines parallel to the bars stay
/// dark. Labels alternate, so any prefix is balanced. All rows land in the
/// train split; use [`Dataset::with_split`] to partition.
pub fn synth_bars(n: usize, side: usize, rng: &mut RngState) -> Result<Dataset> {
    if side < 4 {
        return contract(format!("bars need side >= 4, got {side}"));
    }
    let mut x = Matrix::zeros(n, side * side);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % 2;
        let lit: Vec<usize> = loop {
            let l: Vec<usize> = (1..side - 1).filter(|_| rng.bernoulli(0.3)).collect();
            if !l.is_empty() {
                break l;
            }
        };
        let row = x.row_mut(i);
        for &k in &lit {
            for t in 0..side {
                let (r, c) = if label == 0 { (k, t) } else { (t, k) };
                row[r * side + c] = 1.0;
            }
        }
        y.push(label);
    }
    unsplit("bars", x, y)
}

/// Binary images of one filled axis-aligned rectangle: label 0 wide,
/// label 1 tall. Height and width differ and the rectangle fits inside the
/// image at a uniform position. Labels alternate.
pub fn synth_rects(n: usize, side: usize, rng: &mut RngState) -> Result<Dataset> {
    if side < 4 {
        return contract(format!("rectangles need side >= 4, got {side}"));
    }
    let mut x = Matrix::zeros(n, side * side);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % 2;
        let (a, b) = loop {
            let a = 1 + rng.below(side - 1);
            let b = 1 + rng.below(side - 1);
            if a != b {
                break (a.max(b), a.min(b));
            }
        };
        let (h, w) = if label == 1 { (a, b) } else { (b, a) };
        let top = rng.below(side - h + 1);
        let left = rng.below(side - w + 1);
        let row = x.row_mut(i);
        for r in top..top + h {
            for c in left..left + w {
                row[r * side + c] = 1.0;
            }
        }
        y.push(label);
    }
    unsplit("rects", x, y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bars_balanced_and_binary() {
        let ds = synth_bars(10, 6, &mut RngState::new(1)).unwrap();
        let y = ds.train.labels().unwrap();
        assert_eq!(y.len(), 10);
        assert_eq!(y.iter().filter(|&&c| c == 0).count(), 5);
        assert!(ds.train.x.as_slice().iter().all(|&v| v == 0.0 || v == 1.0));
        let rects = synth_rects(10, 6, &mut RngState::new(1)).unwrap();
        assert!(rects.train.x.as_slice().iter().all(|&v| v == 0.0 || v == 1.0));
        assert_eq!(rects.train.labels().unwrap().iter().sum::<usize>(), 5);
    }

    #[test]
    fn bars_orientation_matches_label() {
        let side = 7;
        let ds = synth_bars(40, side, &mut RngState::new(2)).unwrap();
        for (r, &label) in ds.train.x.iter_rows().zip(ds.train.labels().unwrap()) {
            // horizontal images have constant rows, vertical constant columns
            for a in 0..side {
                for b in 1..side {
                    let (p, q) = if label == 0 { (a * side + b, a * side) } else { (b * side + a, a) };
                    assert_eq!(r[p], r[q]);
                }
            }
        }
    }

    #[test]
    fn rects_have_requested_shape() {
        let side = 8;
        let ds = synth_rects(30, side, &mut RngState::new(3)).unwrap();
        for (r, &label) in ds.train.x.iter_rows().zip(ds.train.labels().unwrap()) {
            let rows = (0..side).filter(|i| r[i * side..(i + 1) * side].iter().any(|&v| v > 0.0)).count();
            let cols = (0..side).filter(|j| (0..side).any(|i| r[i * side + j] > 0.0)).count();
            assert_eq!(label == 1, rows > cols);
        }
    }

    #[test]
    fn side_too_small() {
        assert!(synth_bars(4, 3, &mut RngState::new(0)).is_err());
    }

    #[test]
    fn generators_are_deterministic() {
        let a = synth_bars(20, 5, &mut RngState::new(9)).unwrap();
        let b = synth_bars(20, 5, &mut RngState::new(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn out_of_range_features_rejected() {
        let x = Matrix::from_rows(&[[0.5, 1.2]]);
        assert!(Dataset::from_rows("bad", x, None, 0, 1, 0).is_err());
    }

    #[test]
    fn split_and_subsample() {
        let ds = synth_bars(100, 5, &mut RngState::new(4)).unwrap().with_split(60, 20).unwrap();
        assert_eq!((ds.train.len(), ds.valid.len(), ds.test.len()), (60, 20, 20));
        let full = subsample(&ds, 60, 20, 1).unwrap();
        assert_eq!(full.train, ds.train);
        let small = subsample(&ds, 15, 5, 7).unwrap();
        let again = subsample(&ds, 15, 5, 7).unwrap();
        assert_eq!(small.train.source, again.train.source);
        let ones = small.train.labels().unwrap().iter().filter(|&&c| c == 1).count();
        assert!((7..=8).contains(&ones));
        assert!(subsample(&ds, 61, 0, 1).is_err());
    }

    #[test]
    fn stratification_within_one_per_class() {
        // 3 classes with skewed counts
        let mut labels = vec![0; 50];
        labels.extend(vec![1; 30]);
        labels.extend(vec![2; 20]);
        let x = Matrix::zeros(100, 2);
        let ds = Dataset::from_rows("s", x, Some(labels), 3, 100, 0).unwrap();
        for n in [7, 33, 58, 99] {
            let sub = subsample(&ds, n, 0, 3).unwrap();
            let y = sub.train.labels().unwrap();
            assert_eq!(y.len(), n);
            for (c, share) in [(0, 0.5), (1, 0.3), (2, 0.2)] {
                let got = y.iter().filter(|&&v| v == c).count() as f64;
                assert!((got - share * n as f64).abs() <= 1.0, "class {c} n {n}");
            }
        }
    }

    #[test]
    fn pixel_noise_stays_in_unit_interval() {
        let ds = synth_bars(20, 5, &mut RngState::new(5)).unwrap();
        let noisy = ds.with_pixel_noise(0.5, &mut RngState::new(6)).unwrap();
        assert!(noisy.train.x.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_ne!(noisy.train.x, ds.train.x);
    }
}
