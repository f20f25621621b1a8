//! Prepared datasets: HR images cropped to a common multiple of the scales,
//! their bicubic LR counterparts, and a TOML manifest tying them together.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{downscale, Image};

/// HR sides are cropped to multiples of this so ×2, ×3 and ×4 all divide.
pub const HR_MULTIPLE: usize = 12;

pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Entry {
    pub name: String,
    pub split: Split,
    /// Relative to the manifest directory.
    pub hr: PathBuf,
    /// Keyed `x2`, `x3`, ...
    #[serde(default)]
    pub lr: BTreeMap<String, PathBuf>,
}

impl Entry {
    pub fn lr_path(&self, scale: u32) -> Option<&Path> {
        self.lr.get(&scale_key(scale)).map(PathBuf::as_path)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub dataset: String,
    pub scales: Vec<u32>,
    /// Mean colour of the training split, 0–255.
    pub rgb_mean: [f32; 3],
    #[serde(default, rename = "entry")]
    pub entries: Vec<Entry>,
}

fn scale_key(scale: u32) -> String {
    format!("x{scale}")
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        toml::from_str(&text)
            .map_err(|e| Error::config(format!("manifest {}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(format!("cannot encode manifest: {e}")))
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Entry> {
        self.entries.iter().filter(move |e| e.split == split)
    }
}

/// What [`prepare`] did.
#[derive(Debug)]
pub struct Prepared {
    pub manifest: Manifest,
    /// Files that could not be read, with the reason.
    pub skipped: Vec<(PathBuf, String)>,
}

/// Which images go to the validation split.
#[derive(Clone, Debug, Default)]
pub struct PrepareOptions {
    pub dataset: Option<String>,
    /// File stems placed in the validation split.
    pub val: Vec<String>,
}

/// Crops every PNG in `hr_dir` to a multiple of [`HR_MULTIPLE`], writes it
/// under `out_dir/HR`, writes antialiased bicubic LR images under
/// `out_dir/LR_x{s}` and a manifest. Rerunning overwrites with identical
/// bytes.
pub fn prepare(
    hr_dir: &Path,
    out_dir: &Path,
    scales: &[u32],
    options: &PrepareOptions,
) -> Result<Prepared> {
    if scales.is_empty() {
        return Err(Error::usage("no scales given"));
    }
    for &s in scales {
        if s == 0 || !HR_MULTIPLE.is_multiple_of(s as usize) {
            return Err(Error::usage(format!(
                "scale {s} does not divide the HR crop multiple {HR_MULTIPLE}"
            )));
        }
    }
    let mut files: Vec<PathBuf> = fs::read_dir(hr_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .is_some_and(|x| x.eq_ignore_ascii_case("png"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::usage(format!(
            "no PNG images in {}",
            hr_dir.display()
        )));
    }

    fs::create_dir_all(out_dir.join("HR"))?;
    for &s in scales {
        fs::create_dir_all(out_dir.join(format!("LR_x{s}")))?;
    }

    let mut entries = Vec::new();
    let mut skipped = Vec::new();
    let mut sum = [0.0f64; 3];
    let mut count = 0u64;
    for path in files {
        let img = match Image::open(&path) {
            Ok(img) => img,
            Err(e) => {
                warn!("skipping {}: {e}", path.display());
                skipped.push((path, e.to_string()));
                continue;
            }
        };
        let (w, h) = (
            img.width() / HR_MULTIPLE * HR_MULTIPLE,
            img.height() / HR_MULTIPLE * HR_MULTIPLE,
        );
        if w == 0 || h == 0 {
            let why = format!(
                "{}x{} is smaller than {HR_MULTIPLE}x{HR_MULTIPLE}",
                img.width(),
                img.height()
            );
            warn!("skipping {}: {why}", path.display());
            skipped.push((path, why));
            continue;
        }
        let hr = img.crop(0, 0, w, h)?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let split = if options.val.contains(&name) {
            Split::Val
        } else {
            Split::Train
        };

        let hr_rel = PathBuf::from("HR").join(format!("{name}.png"));
        hr.save_png(out_dir.join(&hr_rel))?;
        let mut lr = BTreeMap::new();
        for &s in scales {
            let rel = PathBuf::from(format!("LR_x{s}")).join(format!("{name}.png"));
            downscale(&hr, s)?.save_png(out_dir.join(&rel))?;
            lr.insert(scale_key(s), rel);
        }

        if split == Split::Train {
            for px in hr.data().chunks_exact(3) {
                for c in 0..3 {
                    sum[c] += px[c] as f64;
                }
            }
            count += (w * h) as u64;
        }
        entries.push(Entry {
            name,
            split,
            hr: hr_rel,
            lr,
        });
    }
    if entries.is_empty() {
        return Err(Error::usage(format!(
            "none of the images in {} could be used",
            hr_dir.display()
        )));
    }

    let rgb_mean = if count == 0 {
        [0.0; 3]
    } else {
        sum.map(|s| (s / count as f64) as f32)
    };
    let manifest = Manifest {
        dataset: options.dataset.clone().unwrap_or_else(|| {
            hr_dir
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "dataset".into())
        }),
        scales: scales.to_vec(),
        rgb_mean,
        entries,
    };
    fs::write(out_dir.join(MANIFEST_FILE), manifest.to_toml()?)?;
    Ok(Prepared { manifest, skipped })
}

/// One HR image and its LR versions, decoded.
#[derive(Clone, Debug)]
pub struct TrainPair {
    pub name: String,
    pub hr: Image,
    pub lr: BTreeMap<u32, Image>,
}

/// Decoded training images ready for patch sampling.
#[derive(Clone, Debug, Default)]
pub struct TrainingSet {
    pub pairs: Vec<TrainPair>,
    pub rgb_mean: [f32; 3],
}

impl TrainingSet {
    /// Loads the training split of a manifest.
    pub fn load(manifest_path: &Path) -> Result<Self> {
        let manifest = Manifest::load(manifest_path)?;
        let root = manifest_path.parent().unwrap_or(Path::new("."));
        let mut pairs = Vec::new();
        for entry in manifest.split(Split::Train) {
            let hr = Image::open(root.join(&entry.hr))?;
            let mut lr = BTreeMap::new();
            for &s in &manifest.scales {
                let Some(rel) = entry.lr_path(s) else {
                    return Err(Error::config(format!("{}: no LR image for x{s}", entry.name)));
                };
                let img = Image::open(root.join(rel))?;
                check_pair(&entry.name, &hr, &img, s)?;
                lr.insert(s, img);
            }
            pairs.push(TrainPair {
                name: entry.name.clone(),
                hr,
                lr,
            });
        }
        if pairs.is_empty() {
            return Err(Error::config(format!(
                "manifest {} has no training images",
                manifest_path.display()
            )));
        }
        Ok(TrainingSet {
            pairs,
            rgb_mean: manifest.rgb_mean,
        })
    }

    /// Builds a set in memory, degrading each HR image (cropped to a
    /// multiple of every scale) with the same bicubic as [`prepare`].
    pub fn from_hr(images: Vec<(String, Image)>, scales: &[u32]) -> Result<Self> {
        let lcm = scales.iter().fold(1usize, |a, &s| lcm(a, s as usize));
        let mut pairs = Vec::new();
        let mut sum = [0.0f64; 3];
        let mut count = 0u64;
        for (name, img) in images {
            let hr = img.crop(0, 0, img.width() / lcm * lcm, img.height() / lcm * lcm)?;
            let mut lr = BTreeMap::new();
            for &s in scales {
                lr.insert(s, downscale(&hr, s)?);
            }
            for px in hr.data().chunks_exact(3) {
                for c in 0..3 {
                    sum[c] += px[c] as f64;
                }
            }
            count += (hr.width() * hr.height()) as u64;
            pairs.push(TrainPair { name, hr, lr });
        }
        let rgb_mean = if count == 0 {
            [0.0; 3]
        } else {
            sum.map(|s| (s / count as f64) as f32)
        };
        Ok(TrainingSet { pairs, rgb_mean })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

fn check_pair(name: &str, hr: &Image, lr: &Image, scale: u32) -> Result<()> {
    let s = scale as usize;
    if lr.width() * s != hr.width() || lr.height() * s != hr.height() {
        return Err(Error::config(format!(
            "{name}: x{scale} LR is {}x{}, HR is {}x{}",
            lr.width(),
            lr.height(),
            hr.width(),
            hr.height()
        )));
    }
    Ok(())
}

fn lcm(a: usize, b: usize) -> usize {
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    a / gcd(a, b) * b
}
