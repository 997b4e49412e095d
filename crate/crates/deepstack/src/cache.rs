//! Dataset cache: `<cache>/<dataset>/<file>` plus a `SHA256SUMS` file per
//! dataset directory, written at fetch time and checked on every load.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use deepstack_core::data::Dataset;
use deepstack_core::Matrix;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::formats;

pub const CACHE_ENV: &str = "DEEPSTACK_CACHE";
pub const SUMS_FILE: &str = "SHA256SUMS";

const MNIST_URL: &str = "https://ossci-datasets.s3.amazonaws.com/mnist";

/// `$DEEPSTACK_CACHE`, else `$HOME/.cache/deepstack`, else `./.deepstack-cache`.
pub fn cache_dir() -> PathBuf {
    if let Some(p) = std::env::var_os(CACHE_ENV).filter(|p| !p.is_empty()) {
        return PathBuf::from(p);
    }
    match std::env::var_os("HOME") {
        Some(h) => Path::new(&h).join(".cache").join("deepstack"),
        None => PathBuf::from(".deepstack-cache"),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    /// Separate training and test IDX pairs.
    Idx {
        train_images: &'static str,
        train_labels: &'static str,
        test_images: &'static str,
        test_labels: &'static str,
    },
    /// Training (train + valid rows) and test amat files.
    Amat { train: &'static str, test: &'static str },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Benchmark {
    pub name: &'static str,
    pub classes: usize,
    pub dim: usize,
    pub n_train: usize,
    pub n_valid: usize,
    pub layout: Layout,
}

impl Benchmark {
    pub fn files(&self) -> Vec<&'static str> {
        match self.layout {
            Layout::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
            } => vec![train_images, train_labels, test_images, test_labels],
            Layout::Amat { train, test } => vec![train, test],
        }
    }
}

const fn amat(name: &'static str, classes: usize, n_train: usize, n_valid: usize, train: &'static str, test: &'static str) -> Benchmark {
    Benchmark {
        name,
        classes,
        dim: 784,
        n_train,
        n_valid,
        layout: Layout::Amat { train, test },
    }
}

pub const BENCHMARKS: [Benchmark; 9] = [
    Benchmark {
        name: "mnist",
        classes: 10,
        dim: 784,
        n_train: 50_000,
        n_valid: 10_000,
        layout: Layout::Idx {
            train_images: "train-images-idx3-ubyte",
            train_labels: "train-labels-idx1-ubyte",
            test_images: "t10k-images-idx3-ubyte",
            test_labels: "t10k-labels-idx1-ubyte",
        },
    },
    amat("basic", 10, 10_000, 2_000, "mnist_train.amat", "mnist_test.amat"),
    amat(
        "rot",
        10,
        10_000,
        2_000,
        "mnist_all_rotation_normalized_float_train_valid.amat",
        "mnist_all_rotation_normalized_float_test.amat",
    ),
    amat("bg-rand", 10, 10_000, 2_000, "mnist_background_random_train.amat", "mnist_background_random_test.amat"),
    amat("bg-img", 10, 10_000, 2_000, "mnist_background_images_train.amat", "mnist_background_images_test.amat"),
    amat(
        "bg-img-rot",
        10,
        10_000,
        2_000,
        "mnist_all_background_images_rotation_normalized_train_valid.amat",
        "mnist_all_background_images_rotation_normalized_test.amat",
    ),
    amat("rect", 2, 1_000, 200, "rectangles_train.amat", "rectangles_test.amat"),
    amat("rect-img", 2, 10_000, 2_000, "rectangles_im_train.amat", "rectangles_im_test.amat"),
    amat("convex", 2, 6_000, 2_000, "convex_train.amat", "convex_test.amat"),
];

pub fn benchmark(name: &str) -> Option<&'static Benchmark> {
    BENCHMARKS.iter().find(|b| b.name == name)
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

/// `<hash>  <file>` lines, as written by `sha256sum`.
pub fn read_sums(dir: &Path) -> Result<BTreeMap<String, String>> {
    let path = dir.join(SUMS_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut sums = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (hash, file) = line.split_once("  ").ok_or_else(|| Error::Parse {
            path: path.clone(),
            line: i + 1,
            msg: "expected '<sha256>  <file>'".into(),
        })?;
        sums.insert(file.trim().to_string(), hash.trim().to_string());
    }
    Ok(sums)
}

fn write_sums(dir: &Path, sums: &BTreeMap<String, String>) -> Result<()> {
    let text: String = sums.iter().map(|(f, h)| format!("{h}  {f}\n")).collect();
    let path = dir.join(SUMS_FILE);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Checks every file of `bench` against the dataset's checksum ledger.
pub fn verify(cache: &Path, bench: &Benchmark) -> Result<PathBuf> {
    let dir = cache.join(bench.name);
    let missing = || Error::MissingDataset {
        name: bench.name.to_string(),
        path: dir.clone(),
    };
    if !dir.join(SUMS_FILE).is_file() {
        return Err(missing());
    }
    let sums = read_sums(&dir)?;
    for file in bench.files() {
        let path = dir.join(file);
        if !path.is_file() {
            return Err(missing());
        }
        match sums.get(file) {
            Some(h) if *h == sha256_file(&path)? => {}
            _ => return Err(Error::Checksum { path }),
        }
    }
    Ok(dir)
}

/// Loads a cached benchmark with its standard train/valid/test split.
pub fn load_benchmark(cache: &Path, bench: &Benchmark) -> Result<Dataset> {
    let dir = verify(cache, bench)?;
    let (x, y, n_train_file) = match bench.layout {
        Layout::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
        } => {
            let (tr, tr_y) = formats::load_idx(&dir.join(train_images), &dir.join(train_labels))?;
            let (te, te_y) = formats::load_idx(&dir.join(test_images), &dir.join(test_labels))?;
            let n = tr.x.rows();
            (stack_rows(&tr.x, &te.x)?, [tr_y, te_y].concat(), n)
        }
        Layout::Amat { train, test } => {
            let (tr, tr_y) = formats::load_amat(&dir.join(train), bench.dim)?;
            let (te, te_y) = formats::load_amat(&dir.join(test), bench.dim)?;
            let n = tr.rows();
            (stack_rows(&tr, &te)?, [tr_y, te_y].concat(), n)
        }
    };
    if n_train_file < bench.n_train + bench.n_valid {
        return Err(Error::Config(format!(
            "{}: training file has {n_train_file} rows, need {}",
            bench.name,
            bench.n_train + bench.n_valid
        )));
    }
    // Rows between train+valid and the end of the training file are unused.
    let keep: Vec<usize> = (0..bench.n_train + bench.n_valid).chain(n_train_file..x.rows()).collect();
    let x = x.select_rows(&keep);
    let y: Vec<usize> = keep.iter().map(|&i| y[i]).collect();
    Ok(Dataset::from_rows(bench.name, x, Some(y), bench.classes, bench.n_train, bench.n_valid)?)
}

fn stack_rows(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    let mut data = a.as_slice().to_vec();
    data.extend_from_slice(b.as_slice());
    Ok(Matrix::from_vec(a.rows() + b.rows(), a.cols(), data)?)
}

/// Copies the benchmark's files from `from` into the cache and records
/// their checksums.
pub fn import(cache: &Path, bench: &Benchmark, from: &Path) -> Result<PathBuf> {
    let dir = cache.join(bench.name);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut sums = BTreeMap::new();
    for file in bench.files() {
        let src = from.join(file);
        let dst = dir.join(file);
        fs::copy(&src, &dst).map_err(|e| Error::io(&src, e))?;
        sums.insert(file.to_string(), sha256_file(&dst)?);
    }
    write_sums(&dir, &sums)?;
    Ok(dir)
}

/// Downloads MNIST (gzip IDX files). The MNIST variations are distributed
/// as zip archives and are brought in with [`import`] instead.
pub fn download(cache: &Path, bench: &Benchmark) -> Result<PathBuf> {
    if !matches!(bench.layout, Layout::Idx { .. }) {
        return Err(Error::Config(format!(
            "'{}' cannot be downloaded directly; unpack its archive and use `fetch {} --from DIR`",
            bench.name, bench.name
        )));
    }
    let dir = cache.join(bench.name);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut sums = BTreeMap::new();
    for file in bench.files() {
        let url = format!("{MNIST_URL}/{file}.gz");
        let body = ureq::get(&url)
            .call()
            .map_err(|e| Error::Network(format!("{url}: {e}")))?
            .into_body()
            .read_to_vec()
            .map_err(|e| Error::Network(format!("{url}: {e}")))?;
        let mut raw = Vec::new();
        flate2::read::GzDecoder::new(&body[..])
            .read_to_end(&mut raw)
            .map_err(|e| Error::Network(format!("{url}: bad gzip stream: {e}")))?;
        let dst = dir.join(file);
        fs::write(&dst, &raw).map_err(|e| Error::io(&dst, e))?;
        sums.insert(file.to_string(), sha256_file(&dst)?);
    }
    write_sums(&dir, &sums)?;
    Ok(dir)
}
