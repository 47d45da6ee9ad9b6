//! Skeleton sequences: preprocessing, augmentation, a synthetic generator, and
//! the dataset file format.
//!
//! File layout (`STGCDS v1`): text header lines followed, per sequence, by a
//! text record and a binary coordinate payload.
//!
//! ```text
//! STGCDS v1 <n_seq>
//! classes <C> <name_0> … <name_{C-1}>
//! <label> <n_joints> <T> <n_bones> <train|test>      ┐
//! <i_0> <j_0> <i_1> <j_1> …                          │ per sequence
//! <T·n_joints·3 little-endian f64, frame-major>      ┘
//! ```

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::StaticGraph;
use crate::layer::SignalSequence;
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Segments drawn by [`segment_sample`] unless configured otherwise.
pub const DEFAULT_SEGMENTS: usize = 12;
/// Range of the random skeleton scale factor.
pub const JITTER_RANGE: (f64, f64) = (0.98, 1.02);

const FORMAT_MAGIC: &str = "STGCDS";
const FORMAT_VERSION: u32 = 1;

/// One single-actor action clip: `T` frames of `n_joints` 3D coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonSequence {
    n_joints: usize,
    /// Frame-major `[t][joint][xyz]`.
    coords: Vec<f64>,
    bones: Vec<(usize, usize)>,
    pub label: usize,
}

impl SkeletonSequence {
    pub fn new(
        n_joints: usize,
        coords: Vec<f64>,
        bones: Vec<(usize, usize)>,
        label: usize,
    ) -> Result<Self> {
        if n_joints == 0 {
            return Err(Error::Invalid("sequence needs at least one joint".into()));
        }
        if coords.is_empty() || !coords.len().is_multiple_of(3 * n_joints) {
            return Err(Error::Dimension(format!(
                "{} coordinates do not form whole frames of {n_joints} joints",
                coords.len()
            )));
        }
        if let Some(bad) = coords.iter().position(|x| !x.is_finite()) {
            return Err(Error::Invalid(format!("non-finite coordinate at index {bad}")));
        }
        for &(i, j) in &bones {
            if i >= n_joints || j >= n_joints || i == j {
                return Err(Error::Graph(format!(
                    "bone ({i}, {j}) invalid for {n_joints} joints"
                )));
            }
        }
        Ok(Self {
            n_joints,
            coords,
            bones,
            label,
        })
    }

    fn with_coords(&self, coords: Vec<f64>) -> Self {
        Self {
            n_joints: self.n_joints,
            coords,
            bones: self.bones.clone(),
            label: self.label,
        }
    }

    pub fn n_joints(&self) -> usize {
        self.n_joints
    }

    /// Number of frames `T`.
    pub fn len(&self) -> usize {
        self.coords.len() / (3 * self.n_joints)
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn bones(&self) -> &[(usize, usize)] {
        &self.bones
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let w = 3 * self.n_joints;
        &self.coords[t * w..(t + 1) * w]
    }

    pub fn joint(&self, t: usize, i: usize) -> [f64; 3] {
        let f = self.frame(t);
        [f[3 * i], f[3 * i + 1], f[3 * i + 2]]
    }

    /// Coordinates as graph signals, one `n_joints × 3` matrix per frame.
    pub fn to_signal<T: Scalar>(&self) -> SignalSequence<T> {
        let frames = (0..self.len())
            .map(|t| Matrix::from_fn(self.n_joints, 3, |i, c| T::of(self.frame(t)[3 * i + c])))
            .collect();
        SignalSequence::new(frames).expect("sequence has at least one frame")
    }

    pub fn graph<T: Scalar>(&self) -> Result<StaticGraph<T>> {
        StaticGraph::from_bones(self.n_joints, &self.bones)
    }
}

/// Moves the origin of every frame to the mean of its joints.
pub fn center_orthocenter(seq: &SkeletonSequence) -> SkeletonSequence {
    let n = seq.n_joints;
    let mut coords = seq.coords.clone();
    for frame in coords.chunks_mut(3 * n) {
        let mut mean = [0.0; 3];
        for joint in frame.chunks(3) {
            for c in 0..3 {
                mean[c] += joint[c];
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        for joint in frame.chunks_mut(3) {
            for c in 0..3 {
                joint[c] -= mean[c];
            }
        }
    }
    seq.with_coords(coords)
}

/// Repeats the last frame until the sequence has at least `min_len` frames.
pub fn pad_to(seq: &SkeletonSequence, min_len: usize) -> SkeletonSequence {
    let mut coords = seq.coords.clone();
    let last = seq.frame(seq.len() - 1).to_vec();
    for _ in seq.len()..min_len {
        coords.extend_from_slice(&last);
    }
    seq.with_coords(coords)
}

/// Bounds `[start, end)` of segment `j` when `len` frames are split into
/// `n` contiguous parts whose sizes differ by at most one (longer first).
pub fn segment_bounds(len: usize, n: usize, j: usize) -> (usize, usize) {
    let base = len / n;
    let rem = len % n;
    let start = j * base + j.min(rem);
    (start, start + base + usize::from(j < rem))
}

fn pick_frames(seq: &SkeletonSequence, idx: &[usize]) -> SkeletonSequence {
    let mut coords = Vec::with_capacity(idx.len() * 3 * seq.n_joints);
    for &t in idx {
        coords.extend_from_slice(seq.frame(t));
    }
    seq.with_coords(coords)
}

/// Frame indices chosen by [`segment_sample`], one uniform draw per segment.
pub fn segment_indices<R: Rng + ?Sized>(len: usize, n_segments: usize, rng: &mut R) -> Result<Vec<usize>> {
    if n_segments == 0 {
        return Err(Error::Invalid("need at least one segment".into()));
    }
    if len < n_segments {
        return Err(Error::Invalid(format!(
            "sequence of {len} frames is shorter than {n_segments} segments"
        )));
    }
    Ok((0..n_segments)
        .map(|j| {
            let (s, e) = segment_bounds(len, n_segments, j);
            rng.gen_range(s..e)
        })
        .collect())
}

/// Splits the sequence into `n_segments` near-equal parts and keeps one
/// random frame from each.
pub fn segment_sample<R: Rng + ?Sized>(
    seq: &SkeletonSequence,
    n_segments: usize,
    rng: &mut R,
) -> Result<SkeletonSequence> {
    let idx = segment_indices(seq.len(), n_segments, rng)?;
    Ok(pick_frames(seq, &idx))
}

/// Deterministic counterpart of [`segment_sample`] keeping the middle frame
/// of each segment (used for evaluation).
pub fn segment_center(seq: &SkeletonSequence, n_segments: usize) -> Result<SkeletonSequence> {
    if n_segments == 0 || seq.len() < n_segments {
        return Err(Error::Invalid(format!(
            "sequence of {} frames is shorter than {n_segments} segments",
            seq.len()
        )));
    }
    let idx: Vec<usize> = (0..n_segments)
        .map(|j| {
            let (s, e) = segment_bounds(seq.len(), n_segments, j);
            (s + e - 1) / 2
        })
        .collect();
    Ok(pick_frames(seq, &idx))
}

pub fn scale_by(seq: &SkeletonSequence, s: f64) -> SkeletonSequence {
    seq.with_coords(seq.coords.iter().map(|x| x * s).collect())
}

/// Multiplies every coordinate by one factor drawn from [`JITTER_RANGE`];
/// returns the factor alongside.
pub fn scale_jitter<R: Rng + ?Sized>(seq: &SkeletonSequence, rng: &mut R) -> (SkeletonSequence, f64) {
    let s = rng.gen_range(JITTER_RANGE.0..=JITTER_RANGE.1);
    (scale_by(seq, s), s)
}

/// Augmentation applied to each training draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentConfig {
    pub segments: usize,
    pub jitter: bool,
    /// Augmented draws of every training sequence per epoch.
    pub aug_copies: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            segments: DEFAULT_SEGMENTS,
            jitter: true,
            aug_copies: 8,
        }
    }
}

/// Training-time pipeline: centering, repeat-padding to `segments` frames,
/// random segment sampling and optional scale jitter.
pub fn augment<R: Rng + ?Sized>(
    seq: &SkeletonSequence,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> Result<SkeletonSequence> {
    let padded = pad_to(&center_orthocenter(seq), cfg.segments);
    let sampled = segment_sample(&padded, cfg.segments, rng)?;
    Ok(if cfg.jitter {
        scale_jitter(&sampled, rng).0
    } else {
        sampled
    })
}

/// Evaluation-time pipeline: centering, padding, middle-frame sampling.
pub fn prepare_eval(seq: &SkeletonSequence, segments: usize) -> Result<SkeletonSequence> {
    segment_center(&pad_to(&center_orthocenter(seq), segments), segments)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub sequences: Vec<SkeletonSequence>,
    pub class_names: Vec<String>,
    /// Split of `sequences[i]`.
    pub split: Vec<Split>,
}

impl Dataset {
    pub fn new(
        sequences: Vec<SkeletonSequence>,
        class_names: Vec<String>,
        split: Vec<Split>,
    ) -> Result<Self> {
        if sequences.len() != split.len() {
            return Err(Error::Dimension("one split tag per sequence required".into()));
        }
        if let Some(s) = sequences.iter().find(|s| s.label >= class_names.len()) {
            return Err(Error::Label {
                label: s.label,
                n_classes: class_names.len(),
            });
        }
        if let Some(name) = class_names
            .iter()
            .find(|n| n.is_empty() || n.chars().any(char::is_whitespace))
        {
            return Err(Error::Invalid(format!(
                "class name {name:?} must be non-empty without whitespace"
            )));
        }
        Ok(Self {
            sequences,
            class_names,
            split,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn part(&self, which: Split) -> Vec<&SkeletonSequence> {
        self.sequences
            .iter()
            .zip(&self.split)
            .filter(|(_, &s)| s == which)
            .map(|(q, _)| q)
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let mut head = format!("{FORMAT_MAGIC} v{FORMAT_VERSION} {}\n", self.sequences.len());
        write!(head, "classes {}", self.class_names.len()).unwrap();
        for name in &self.class_names {
            write!(head, " {name}").unwrap();
        }
        head.push('\n');
        out.extend_from_slice(head.as_bytes());
        for (seq, split) in self.sequences.iter().zip(&self.split) {
            let mut rec = format!(
                "{} {} {} {} {}\n",
                seq.label,
                seq.n_joints,
                seq.len(),
                seq.bones.len(),
                split.as_str()
            );
            let pairs: Vec<String> = seq
                .bones
                .iter()
                .flat_map(|&(i, j)| [i.to_string(), j.to_string()])
                .collect();
            rec.push_str(&pairs.join(" "));
            rec.push('\n');
            out.extend_from_slice(rec.as_bytes());
            for x in &seq.coords {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let header = r.line()?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 3 || parts[0] != FORMAT_MAGIC {
            return Err(r.err("expected `STGCDS v<version> <n_seq>` header"));
        }
        let version: u32 = parts[1]
            .strip_prefix('v')
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| r.err("malformed version tag"))?;
        if version != FORMAT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let n_seq: usize = r.parse_tok(parts[2], "sequence count")?;

        let classes = r.line()?;
        let mut toks = classes.split_whitespace();
        if toks.next() != Some("classes") {
            return Err(r.err("expected `classes <C> <names…>` line"));
        }
        let n_classes: usize = r.parse_tok(toks.next().unwrap_or(""), "class count")?;
        let class_names: Vec<String> = toks.map(str::to_string).collect();
        if class_names.len() != n_classes {
            return Err(r.err("class count does not match the listed names"));
        }

        let mut sequences = Vec::with_capacity(n_seq.min(1 << 16));
        let mut split = Vec::with_capacity(n_seq.min(1 << 16));
        for _ in 0..n_seq {
            let rec = r.line()?;
            let f: Vec<&str> = rec.split_whitespace().collect();
            if f.len() != 5 {
                return Err(r.err("expected `<label> <n_joints> <T> <n_bones> <split>`"));
            }
            let label: usize = r.parse_tok(f[0], "label")?;
            let n_joints: usize = r.parse_tok(f[1], "joint count")?;
            let frames: usize = r.parse_tok(f[2], "frame count")?;
            let n_bones: usize = r.parse_tok(f[3], "bone count")?;
            let which = match f[4] {
                "train" => Split::Train,
                "test" => Split::Test,
                _ => return Err(r.err("split must be `train` or `test`")),
            };
            let bone_line = r.line()?;
            let idx: Vec<usize> = bone_line
                .split_whitespace()
                .map(|t| r.parse_tok(t, "bone index"))
                .collect::<Result<_>>()?;
            if idx.len() != 2 * n_bones {
                return Err(r.err("bone line does not hold n_bones pairs"));
            }
            let bones = idx.chunks(2).map(|p| (p[0], p[1])).collect();
            let count = frames
                .checked_mul(n_joints)
                .and_then(|x| x.checked_mul(3))
                .ok_or_else(|| r.err("coordinate count overflows"))?;
            let coords = r.f64s(count)?;
            let at = r.pos;
            let seq = SkeletonSequence::new(n_joints, coords, bones, label).map_err(|e| Error::Parse {
                offset: at,
                line: Some(r.line_no),
                msg: e.to_string(),
            })?;
            sequences.push(seq);
            split.push(which);
        }
        if r.pos != bytes.len() {
            return Err(r.err("trailing bytes after the last sequence"));
        }
        Self::new(sequences, class_names, split).map_err(|e| Error::Parse {
            offset: bytes.len(),
            line: None,
            msg: e.to_string(),
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    line_no: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self {
            bytes,
            pos: 0,
            line_no: 0,
        }
    }

    fn err(&self, msg: &str) -> Error {
        Error::Parse {
            offset: self.pos,
            line: Some(self.line_no),
            msg: msg.to_string(),
        }
    }

    fn line(&mut self) -> Result<&'a str> {
        let rest = &self.bytes[self.pos..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| self.err("unexpected end of file"))?;
        self.line_no += 1;
        let text = std::str::from_utf8(&rest[..end]).map_err(|_| self.err("header line is not UTF-8"))?;
        self.pos += end + 1;
        Ok(text)
    }

    fn parse_tok<V: std::str::FromStr>(&self, tok: &str, what: &str) -> Result<V> {
        tok.parse()
            .map_err(|_| self.err(&format!("invalid {what} {tok:?}")))
    }

    fn f64s(&mut self, count: usize) -> Result<Vec<f64>> {
        let need = count.checked_mul(8).ok_or_else(|| self.err("payload too large"))?;
        if self.bytes.len() - self.pos < need {
            return Err(self.err("truncated coordinate payload"));
        }
        let out = self.bytes[self.pos..self.pos + need]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        self.pos += need;
        Ok(out)
    }
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, dataset.to_bytes())?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    Dataset::from_bytes(&std::fs::read(path)?)
}

/// Parameters of the synthetic action generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_classes: usize,
    /// Training sequences per class.
    pub n_per_class: usize,
    /// Test sequences per class.
    pub test_per_class: usize,
    pub n_joints: usize,
    pub frames: usize,
    /// Standard deviation of the Gaussian coordinate noise.
    pub noise: f64,
}

/// Root joint plus up to four limbs hanging off it as chains.
///
/// Joints are numbered limb by limb; returns the bones and, per limb, its
/// joint indices from the root outwards.
pub fn limb_skeleton(n_joints: usize) -> (Vec<(usize, usize)>, Vec<Vec<usize>>) {
    let rest = n_joints.saturating_sub(1);
    let n_limbs = rest.min(4);
    let mut bones = Vec::with_capacity(rest);
    let mut limbs = Vec::with_capacity(n_limbs);
    let mut next = 1;
    for l in 0..n_limbs {
        let size = rest / n_limbs + usize::from(l < rest % n_limbs);
        let joints: Vec<usize> = (next..next + size).collect();
        let mut parent = 0;
        for &j in &joints {
            bones.push((parent, j));
            parent = j;
        }
        next += size;
        limbs.push(joints);
    }
    (bones, limbs)
}

const LIMB_SPACING: f64 = 0.2;
const SWING_AMPLITUDE: f64 = 0.6;
const PHASE_JITTER: f64 = 0.3;

/// Generates a labelled dataset in which class `c` swings limb `c mod L`
/// about the root with `1 + c / L` cycles per clip and a class-specific
/// phase; each clip gets a random phase offset, a random global translation
/// and Gaussian coordinate noise.
pub fn synth_dataset<R: Rng + ?Sized>(spec: &SynthSpec, rng: &mut R) -> Result<Dataset> {
    if spec.n_joints < 4 || spec.frames < 4 {
        return Err(Error::Invalid("synthetic data needs n_joints ≥ 4 and T ≥ 4".into()));
    }
    if spec.n_classes == 0 || spec.n_per_class + spec.test_per_class == 0 {
        return Err(Error::Invalid("synthetic data needs classes and samples".into()));
    }
    if !(spec.noise.is_finite() && spec.noise >= 0.0) {
        return Err(Error::Invalid("noise must be finite and non-negative".into()));
    }
    let (bones, limbs) = limb_skeleton(spec.n_joints);
    let n_limbs = limbs.len();
    let noise = Normal::new(0.0, spec.noise).map_err(|e| Error::Invalid(e.to_string()))?;

    // rest pose: limbs fanned out in the xy-plane, alternately tilted in z
    let mut rest = vec![[0.0f64; 3]; spec.n_joints];
    for (l, joints) in limbs.iter().enumerate() {
        let a = TAU * l as f64 / n_limbs as f64 + 0.25 * std::f64::consts::PI;
        let dir = [a.cos(), a.sin(), if l % 2 == 0 { 0.2 } else { -0.2 }];
        for (depth, &j) in joints.iter().enumerate() {
            let r = LIMB_SPACING * (depth + 1) as f64;
            rest[j] = [r * dir[0], r * dir[1], r * dir[2]];
        }
    }

    let mut sequences = Vec::new();
    let mut split = Vec::new();
    for (which, per_class) in [(Split::Train, spec.n_per_class), (Split::Test, spec.test_per_class)] {
        for c in 0..spec.n_classes {
            let limb = &limbs[c % n_limbs];
            let cycles = (1 + c / n_limbs) as f64;
            let class_phase = 0.7 * c as f64;
            for _ in 0..per_class {
                let phase = class_phase + rng.gen_range(-PHASE_JITTER..=PHASE_JITTER);
                let offset: [f64; 3] = [
                    rng.gen_range(-1.0..=1.0),
                    rng.gen_range(-1.0..=1.0),
                    rng.gen_range(-1.0..=1.0),
                ];
                let mut coords = Vec::with_capacity(spec.frames * spec.n_joints * 3);
                for t in 0..spec.frames {
                    let theta = SWING_AMPLITUDE
                        * (TAU * cycles * t as f64 / spec.frames as f64 + phase).sin();
                    let (s, co) = theta.sin_cos();
                    for (j, p) in rest.iter().enumerate() {
                        let mut q = *p;
                        if limb.contains(&j) {
                            q = [co * p[0] - s * p[1], s * p[0] + co * p[1], p[2]];
                        }
                        for k in 0..3 {
                            let eps = if spec.noise > 0.0 { noise.sample(rng) } else { 0.0 };
                            coords.push(q[k] + offset[k] + eps);
                        }
                    }
                }
                sequences.push(SkeletonSequence::new(spec.n_joints, coords, bones.clone(), c)?);
                split.push(which);
            }
        }
    }
    let class_names = (0..spec.n_classes).map(|c| format!("class{c}")).collect();
    Dataset::new(sequences, class_names, split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ramp(frames: usize, n: usize) -> SkeletonSequence {
        let coords = (0..frames * n * 3).map(|i| i as f64 * 0.1).collect();
        SkeletonSequence::new(n, coords, vec![], 0).unwrap()
    }

    #[test]
    fn centering() {
        let seq = ramp(3, 4);
        let c = center_orthocenter(&seq);
        for t in 0..3 {
            for k in 0..3 {
                let m: f64 = (0..4).map(|i| c.joint(t, i)[k]).sum::<f64>() / 4.0;
                assert!(m.abs() < 1e-12);
            }
        }
        let single = SkeletonSequence::new(1, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], vec![], 0).unwrap();
        assert!(center_orthocenter(&single).coords().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn segment_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let seq = ramp(12, 2);
        assert_eq!(segment_sample(&seq, 12, &mut rng).unwrap(), seq);
        for _ in 0..20 {
            let idx = segment_indices(24, 12, &mut rng).unwrap();
            for (j, &t) in idx.iter().enumerate() {
                assert!(t >= 2 * j && t < 2 * j + 2);
            }
        }
        assert!(segment_sample(&ramp(5, 2), 12, &mut rng).is_err());
        assert_eq!(segment_bounds(14, 12, 0), (0, 2));
        assert_eq!(segment_bounds(14, 12, 1), (2, 4));
        assert_eq!(segment_bounds(14, 12, 2), (4, 5));
        assert_eq!(segment_bounds(14, 12, 11), (13, 14));
    }

    #[test]
    fn padding_repeats_last_frame() {
        let seq = ramp(3, 2);
        let p = pad_to(&seq, 5);
        assert_eq!(p.len(), 5);
        assert_eq!(p.frame(4), seq.frame(2));
        assert_eq!(pad_to(&seq, 2), seq);
    }

    #[test]
    fn jitter_range_and_homogeneity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let seq = ramp(4, 3);
        let norm = |s: &SkeletonSequence| s.coords().iter().map(|x| x * x).sum::<f64>().sqrt();
        for _ in 0..200 {
            let (out, s) = scale_jitter(&seq, &mut rng);
            assert!((0.98..=1.02).contains(&s));
            assert!((norm(&out) - s * norm(&seq)).abs() < 1e-12);
        }
        assert_eq!(scale_by(&seq, 1.0), seq);
    }

    #[test]
    fn sequence_validation() {
        assert!(SkeletonSequence::new(2, vec![0.0; 5], vec![], 0).is_err());
        assert!(SkeletonSequence::new(2, vec![0.0; 6], vec![(0, 2)], 0).is_err());
        assert!(SkeletonSequence::new(2, vec![f64::NAN; 6], vec![], 0).is_err());
    }

    #[test]
    fn limb_skeleton_shapes() {
        let (bones, limbs) = limb_skeleton(15);
        assert_eq!(bones.len(), 14);
        assert_eq!(limbs.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 4, 3, 3]);
        let (bones, limbs) = limb_skeleton(4);
        assert_eq!(bones, vec![(0, 1), (0, 2), (0, 3)]);
        assert_eq!(limbs.len(), 3);
    }

    #[test]
    fn format_errors() {
        let spec = SynthSpec {
            n_classes: 2,
            n_per_class: 2,
            test_per_class: 1,
            n_joints: 5,
            frames: 4,
            noise: 0.01,
        };
        let ds = synth_dataset(&spec, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let bytes = ds.to_bytes();
        assert_eq!(Dataset::from_bytes(&bytes).unwrap(), ds);
        for cut in [0, 5, 20, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(Dataset::from_bytes(&bytes[..cut]), Err(Error::Parse { .. })));
        }
        let mut v2 = bytes.clone();
        v2[8] = b'2';
        assert!(matches!(
            Dataset::from_bytes(&v2),
            Err(Error::Version { found: 2, expected: 1 })
        ));
        let empty = Dataset::new(vec![], vec!["a".into()], vec![]).unwrap();
        assert_eq!(Dataset::from_bytes(&empty.to_bytes()).unwrap(), empty);
    }
}
