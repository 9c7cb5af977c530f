//! Synthetic nuclei scenes and error-profile degradation.
//!
//! Scenes are rotated ellipses on a blank canvas; clusters form by placing
//! some centers near existing nuclei. A degraded "prediction" applies, in
//! this frozen order: merges, splits, boundary jitter, drops, spurious
//! blobs. Everything is a pure function of its config, including seeds, so
//! corpora are reproducible bit for bit.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::SynthError;
use crate::io::{write_instances, write_label_png, MaskFormat};
use crate::mask::{
    instances_from_label_map, morphology, BinaryMask, InstanceMask, LabelMap, MorphOp,
    StructuringElement, MAX_SIDE,
};

/// Smallest instance the generator will leave behind; matches the
/// post-processing floor so ground truth survives its own cleaning.
pub const MIN_NUCLEUS_AREA: usize = 10;

const PLACEMENT_ATTEMPTS: usize = 100;

/// Scene-generation knobs.
#[derive(Debug, Clone)]
pub struct SceneConfig {
    pub height: usize,
    pub width: usize,
    /// Inclusive range for the number of nuclei.
    pub nucleus_count_range: (usize, usize),
    /// Inclusive range for each ellipse semi-axis, in pixels.
    pub semi_axis_range: (f64, f64),
    /// Probability that a nucleus is planted next to an existing one.
    pub cluster_probability: f64,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            height: 256,
            width: 256,
            nucleus_count_range: (8, 20),
            semi_axis_range: (4.0, 14.0),
            cluster_probability: 0.4,
            seed: 42,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.height == 0 || self.width == 0 || self.height > MAX_SIDE || self.width > MAX_SIDE
        {
            return Err(SynthError::Config(format!(
                "scene size {}x{} outside 1..={MAX_SIDE} per side",
                self.height, self.width
            )));
        }
        if self.nucleus_count_range.0 > self.nucleus_count_range.1 {
            return Err(SynthError::Config(format!(
                "empty nucleus count range {:?}",
                self.nucleus_count_range
            )));
        }
        let (lo, hi) = self.semi_axis_range;
        if !(lo.is_finite() && hi.is_finite()) || lo < 1.0 || lo > hi {
            return Err(SynthError::Config(format!(
                "semi-axis range [{lo}, {hi}] must satisfy 1 <= lo <= hi"
            )));
        }
        if !(0.0..=1.0).contains(&self.cluster_probability) {
            return Err(SynthError::Config(format!(
                "cluster probability {} outside [0, 1]",
                self.cluster_probability
            )));
        }
        Ok(())
    }
}

/// Pixels of an axis-aligned-bbox scan that fall inside the rotated
/// ellipse ((x·cosθ + y·sinθ)/a)² + ((−x·sinθ + y·cosθ)/b)² ≤ 1, clipped
/// to the image.
fn rasterize_ellipse(
    height: usize,
    width: usize,
    cr: f64,
    cc: f64,
    a: f64,
    b: f64,
    theta: f64,
) -> Vec<(usize, usize)> {
    let reach = a.max(b);
    let r0 = (cr - reach).floor().clamp(0.0, (height - 1) as f64) as usize;
    let r1 = (cr + reach).ceil().clamp(0.0, (height - 1) as f64) as usize;
    let c0 = (cc - reach).floor().clamp(0.0, (width - 1) as f64) as usize;
    let c1 = (cc + reach).ceil().clamp(0.0, (width - 1) as f64) as usize;
    let (sin, cos) = theta.sin_cos();
    let mut out = Vec::new();
    for r in r0..=r1 {
        for c in c0..=c1 {
            let dy = r as f64 - cr;
            let dx = c as f64 - cc;
            let u = (dx * cos + dy * sin) / a;
            let v = (dy * cos - dx * sin) / b;
            if u * u + v * v <= 1.0 {
                out.push((r, c));
            }
        }
    }
    out
}

fn sq_dist(r: usize, c: usize, cr: f64, cc: f64) -> f64 {
    let dr = r as f64 - cr;
    let dc = c as f64 - cc;
    dr * dr + dc * dc
}

/// Generates a labeled nuclei scene.
///
/// Each nucleus is a rotated ellipse. A pixel claimed by two nuclei goes
/// to the strictly nearer center (the earlier nucleus keeps ties). An
/// attempt that would leave any nucleus, new or existing, under
/// [`MIN_NUCLEUS_AREA`] pixels is re-sampled; after 100 failed attempts
/// placement gives up with an error.
pub fn generate_scene(cfg: &SceneConfig) -> Result<LabelMap, SynthError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (h, w) = (cfg.height, cfg.width);
    let count = rng.random_range(cfg.nucleus_count_range.0..=cfg.nucleus_count_range.1);
    let (ax_lo, ax_hi) = cfg.semi_axis_range;

    // owner[p] = nucleus index + 1, which doubles as the provisional label.
    let mut owner: Vec<u32> = vec![0; h * w];
    let mut centers: Vec<(f64, f64)> = Vec::new();
    let mut areas: Vec<usize> = Vec::new();

    for index in 0..count {
        let mut placed = false;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let a = rng.random_range(ax_lo..=ax_hi);
            let b = rng.random_range(ax_lo..=ax_hi);
            let theta = rng.random_range(0.0..std::f64::consts::PI);
            let clustered =
                rng.random_bool(cfg.cluster_probability) && !centers.is_empty();
            let (cr, cc) = if clustered {
                let anchor = centers[rng.random_range(0..centers.len())];
                let reach = 1.2 * (a + b);
                let dist = rng.random_range(0.3 * reach..=reach);
                let phi = rng.random_range(0.0..std::f64::consts::TAU);
                (
                    (anchor.0 + dist * phi.sin()).clamp(0.0, (h - 1) as f64),
                    (anchor.1 + dist * phi.cos()).clamp(0.0, (w - 1) as f64),
                )
            } else {
                (rng.random_range(0.0..h as f64), rng.random_range(0.0..w as f64))
            };

            let candidate = rasterize_ellipse(h, w, cr, cc, a, b, theta);
            let mut claimed: Vec<(usize, usize)> = Vec::new();
            let mut losses: BTreeMap<usize, usize> = BTreeMap::new();
            for &(r, c) in &candidate {
                match owner[r * w + c] {
                    0 => claimed.push((r, c)),
                    prev => {
                        let j = (prev - 1) as usize;
                        if sq_dist(r, c, cr, cc) < sq_dist(r, c, centers[j].0, centers[j].1) {
                            claimed.push((r, c));
                            *losses.entry(j).or_insert(0) += 1;
                        }
                    }
                }
            }
            if claimed.len() < MIN_NUCLEUS_AREA {
                continue;
            }
            if losses.iter().any(|(&j, &lost)| areas[j] - lost < MIN_NUCLEUS_AREA) {
                continue;
            }
            for &(r, c) in &claimed {
                let prev = owner[r * w + c];
                if prev != 0 {
                    areas[(prev - 1) as usize] -= 1;
                }
                owner[r * w + c] = index as u32 + 1;
            }
            centers.push((cr, cc));
            areas.push(claimed.len());
            placed = true;
            break;
        }
        if !placed {
            return Err(SynthError::PlacementFailed {
                index,
                attempts: PLACEMENT_ATTEMPTS,
            });
        }
    }

    let map = LabelMap::new(h, w, owner).expect("validated dimensions");
    Ok(map.canonicalized())
}

/// Error modes of one simulated prediction source.
#[derive(Debug, Clone)]
pub struct ErrorProfile {
    pub name: String,
    /// Per-instance miss probability.
    pub p_drop: f64,
    /// Per-adjacent-pair merge probability.
    pub p_merge: f64,
    /// Two instances are merge candidates when their minimum Chebyshev
    /// pixel distance is at most this (1 = already touching).
    pub merge_gap: usize,
    /// Per-instance probability of being cut across its minor axis.
    pub p_split: f64,
    /// Maximum radius of the per-instance random dilation or erosion.
    pub boundary_jitter: usize,
    /// Probability that a jittered instance erodes rather than dilates.
    pub p_erode: f64,
    /// Probability of adding one spurious small ellipse to the image.
    pub p_spurious: f64,
    pub seed: u64,
}

impl ErrorProfile {
    /// Identity profile: no degradation at all.
    pub fn identity(seed: u64) -> Self {
        ErrorProfile {
            name: "identity".into(),
            p_drop: 0.0,
            p_merge: 0.0,
            merge_gap: 0,
            p_split: 0.0,
            boundary_jitter: 0,
            p_erode: 0.5,
            p_spurious: 0.0,
            seed,
        }
    }

    /// Source that tends to fuse touching nuclei into one blob.
    pub fn clumper(seed: u64) -> Self {
        ErrorProfile {
            name: "clumper".into(),
            p_drop: 0.08,
            p_merge: 0.5,
            merge_gap: 2,
            p_split: 0.0,
            boundary_jitter: 1,
            p_erode: 0.5,
            p_spurious: 0.1,
            seed,
        }
    }

    /// Source that tends to cut single nuclei in two and erode edges.
    pub fn splitter(seed: u64) -> Self {
        ErrorProfile {
            name: "splitter".into(),
            p_drop: 0.03,
            p_merge: 0.0,
            merge_gap: 0,
            p_split: 0.3,
            boundary_jitter: 1,
            p_erode: 0.8,
            p_spurious: 0.1,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        for (name, p) in [
            ("p_drop", self.p_drop),
            ("p_merge", self.p_merge),
            ("p_split", self.p_split),
            ("p_erode", self.p_erode),
            ("p_spurious", self.p_spurious),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SynthError::Config(format!(
                    "{name} {p} outside [0, 1] in profile {:?}",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, x: usize) -> usize {
        if self.parent[x] != x {
            let root = self.find(self.parent[x]);
            self.parent[x] = root;
        }
        self.parent[x]
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // Lower root wins so groups key on their smallest member.
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.parent[hi] = lo;
        }
    }
}

/// True when some pixel pair of the two instances is within `gap` in
/// Chebyshev distance. Bbox distance prunes the quadratic scan.
fn chebyshev_within(a: &InstanceMask, b: &InstanceMask, gap: usize) -> bool {
    let (ba, bb) = (a.bbox(), b.bbox());
    let axis_gap = |lo1: usize, hi1: usize, lo2: usize, hi2: usize| -> usize {
        if lo1 > hi2 {
            lo1 - hi2
        } else if lo2 > hi1 {
            lo2 - hi1
        } else {
            0
        }
    };
    let row_gap = axis_gap(ba.min_row, ba.max_row, bb.min_row, bb.max_row);
    let col_gap = axis_gap(ba.min_col, ba.max_col, bb.min_col, bb.max_col);
    if row_gap.max(col_gap) > gap {
        return false;
    }
    for (ra, ca) in a.pixels() {
        for (rb, cb) in b.pixels() {
            let d = ra.abs_diff(rb).max(ca.abs_diff(cb));
            if d <= gap {
                return true;
            }
        }
    }
    false
}

/// Direction of the major principal axis of a pixel set, as an
/// unnormalized (dr, dc) vector. Circular sets fall back to the row axis.
fn major_axis_direction(pixels: &[(usize, usize)]) -> (f64, f64) {
    let n = pixels.len() as f64;
    let (mut sr, mut sc, mut srr, mut src, mut scc) = (0i64, 0i64, 0i64, 0i64, 0i64);
    for &(r, c) in pixels {
        let (r, c) = (r as i64, c as i64);
        sr += r;
        sc += c;
        srr += r * r;
        src += r * c;
        scc += c * c;
    }
    let (mr, mc) = (sr as f64 / n, sc as f64 / n);
    let mu_rr = (srr as f64 / n - mr * mr).max(0.0);
    let mu_cc = (scc as f64 / n - mc * mc).max(0.0);
    let mu_rc = src as f64 / n - mr * mc;
    if mu_rc == 0.0 {
        return if mu_rr >= mu_cc { (1.0, 0.0) } else { (0.0, 1.0) };
    }
    let half_trace = 0.5 * (mu_rr + mu_cc);
    let lambda1 = half_trace + (0.5 * (mu_rr - mu_cc)).hypot(mu_rc);
    (mu_rc, lambda1 - mu_rr)
}

/// Splits pixels into the two sides of the minor axis (the plane through
/// the centroid orthogonal to the major direction). None when one side
/// would be empty.
fn split_across_minor_axis(
    inst: &InstanceMask,
) -> Option<(Vec<(usize, usize)>, Vec<(usize, usize)>)> {
    let pixels: Vec<(usize, usize)> = inst.pixels().collect();
    let (vr, vc) = major_axis_direction(&pixels);
    let n = pixels.len() as f64;
    let mr = pixels.iter().map(|p| p.0 as f64).sum::<f64>() / n;
    let mc = pixels.iter().map(|p| p.1 as f64).sum::<f64>() / n;
    let (mut neg, mut pos) = (Vec::new(), Vec::new());
    for &(r, c) in &pixels {
        let dot = (r as f64 - mr) * vr + (c as f64 - mc) * vc;
        if dot < 0.0 {
            neg.push((r, c));
        } else {
            pos.push((r, c));
        }
    }
    if neg.is_empty() || pos.is_empty() {
        None
    } else {
        Some((neg, pos))
    }
}

fn full_grid_mask(inst: &InstanceMask, height: usize, width: usize) -> BinaryMask {
    let mut bits = vec![false; height * width];
    for (r, c) in inst.pixels() {
        bits[r * width + c] = true;
    }
    BinaryMask::new(height, width, bits).expect("instance fits the grid")
}

fn mask_pixels(mask: &BinaryMask) -> Vec<(usize, usize)> {
    mask.iter_set().collect()
}

/// Applies an error profile to ground truth, producing one source's
/// simulated prediction list.
///
/// Stages run in the frozen order merge, split, jitter, drop, spurious.
/// Each stage draws from the profile-seeded stream in a fixed iteration
/// order, so the output is a pure function of (gt, profile). Output ids
/// are 1..n in raster order of each instance's first pixel. Masks may
/// overlap after dilation or merging; downstream consumers accept that.
///
/// Panics when the profile probabilities are outside [0, 1]; validate
/// profiles from untrusted input first.
pub fn degrade(gt: &LabelMap, profile: &ErrorProfile) -> Vec<InstanceMask> {
    profile.validate().expect("error profile probabilities in [0, 1]");
    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);
    let (h, w) = (gt.height(), gt.width());
    let instances = instances_from_label_map(gt);

    // Merge: Bernoulli per candidate edge, then union-find groups. A
    // closing bridges the gap inside each merged union.
    let mut current: Vec<InstanceMask> = if profile.p_merge > 0.0 && instances.len() >= 2 {
        let n = instances.len();
        let mut uf = UnionFind::new(n);
        for i in 0..n {
            for j in i + 1..n {
                if chebyshev_within(&instances[i], &instances[j], profile.merge_gap)
                    && rng.random_bool(profile.p_merge)
                {
                    uf.union(i, j);
                }
            }
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in 0..n {
            let root = uf.find(i);
            groups.entry(root).or_default().push(i);
        }
        groups
            .into_values()
            .map(|members| {
                if members.len() == 1 {
                    return instances[members[0]].clone();
                }
                let mut bits = vec![false; h * w];
                for &m in &members {
                    for (r, c) in instances[m].pixels() {
                        bits[r * w + c] = true;
                    }
                }
                let mut mask = BinaryMask::new(h, w, bits).expect("grid sized");
                let radius = profile.merge_gap.div_ceil(2);
                if radius > 0 {
                    mask = morphology(&mask, MorphOp::Dilate, radius, StructuringElement::Square);
                    mask = morphology(&mask, MorphOp::Erode, radius, StructuringElement::Square);
                }
                InstanceMask::from_pixels(members[0] as u32 + 1, &mask_pixels(&mask))
                    .expect("closing keeps the union nonempty")
            })
            .collect()
    } else {
        instances
    };

    // Split across the minor axis.
    if profile.p_split > 0.0 {
        let mut split_out = Vec::with_capacity(current.len());
        for inst in current {
            if rng.random_bool(profile.p_split) {
                if let Some((neg, pos)) = split_across_minor_axis(&inst) {
                    split_out.push(InstanceMask::from_pixels(1, &neg).expect("nonempty half"));
                    split_out.push(InstanceMask::from_pixels(1, &pos).expect("nonempty half"));
                    continue;
                }
            }
            split_out.push(inst);
        }
        current = split_out;
    }

    // Boundary jitter: radius draw, then direction draw, per instance.
    if profile.boundary_jitter > 0 {
        let mut jittered = Vec::with_capacity(current.len());
        for inst in current {
            let radius = rng.random_range(0..=profile.boundary_jitter);
            let erode = rng.random_bool(profile.p_erode);
            if radius == 0 {
                jittered.push(inst);
                continue;
            }
            let op = if erode { MorphOp::Erode } else { MorphOp::Dilate };
            let mask = morphology(
                &full_grid_mask(&inst, h, w),
                op,
                radius,
                StructuringElement::Disk,
            );
            let pixels = mask_pixels(&mask);
            if !pixels.is_empty() {
                jittered.push(InstanceMask::from_pixels(1, &pixels).expect("nonempty"));
            }
        }
        current = jittered;
    }

    // Drops.
    if profile.p_drop > 0.0 {
        current.retain(|_| !rng.random_bool(profile.p_drop));
    }

    // At most one spurious blob per image.
    if profile.p_spurious > 0.0 && rng.random_bool(profile.p_spurious) {
        let a = rng.random_range(2.0..=4.0);
        let b = rng.random_range(2.0..=4.0);
        let theta = rng.random_range(0.0..std::f64::consts::PI);
        let cr = rng.random_range(0.0..h as f64);
        let cc = rng.random_range(0.0..w as f64);
        let pixels = rasterize_ellipse(h, w, cr, cc, a, b, theta);
        if !pixels.is_empty() {
            current.push(InstanceMask::from_pixels(1, &pixels).expect("nonempty"));
        }
    }

    // Stable renumber by raster position of each instance's first pixel.
    current.sort_by_key(|m| m.first_pixel());
    current
        .iter()
        .enumerate()
        .map(|(i, m)| m.with_id(i as u32 + 1).expect("positive id"))
        .collect()
}

/// Splitmix-style stream derivation: mixes the master seed with the
/// stream index through the splitmix64 finalizer, so consecutive streams
/// are decorrelated and any (master, stream) pair is reproducible.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master.wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E3779B97F4A7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// One manifest line of a generated corpus. Paths are relative to the
/// corpus root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRow {
    pub image_id: String,
    pub gt_path: String,
    pub path_a: String,
    pub path_b: String,
    pub seed_scene: u64,
    pub seed_a: u64,
    pub seed_b: u64,
}

/// Generates `n_images` scenes with two degraded sources and writes them
/// under `out_dir` as `gt/`, `source_a/`, `source_b/` plus `manifest.csv`.
///
/// Ground truth is always a 16-bit label PNG; sources use `format`.
/// Per-image seeds come from [`derive_seed`] on the scene config's seed
/// (streams 3i, 3i+1, 3i+2), so every image is independent of corpus size
/// and generation order.
pub fn make_corpus(
    n_images: usize,
    scene_cfg: &SceneConfig,
    profile_a: &ErrorProfile,
    profile_b: &ErrorProfile,
    out_dir: &Path,
    format: MaskFormat,
) -> Result<Vec<ManifestRow>, SynthError> {
    if n_images == 0 {
        return Err(SynthError::Config("corpus needs at least one image".into()));
    }
    scene_cfg.validate()?;
    profile_a.validate()?;
    profile_b.validate()?;

    let master = scene_cfg.seed;
    let images: Vec<(u64, u64, u64, LabelMap, Vec<InstanceMask>, Vec<InstanceMask>)> = (0
        ..n_images)
        .into_par_iter()
        .map(|i| {
            let seed_scene = derive_seed(master, 3 * i as u64);
            let seed_a = derive_seed(master, 3 * i as u64 + 1);
            let seed_b = derive_seed(master, 3 * i as u64 + 2);
            let scene = generate_scene(&SceneConfig { seed: seed_scene, ..scene_cfg.clone() })?;
            let a = degrade(&scene, &ErrorProfile { seed: seed_a, ..profile_a.clone() });
            let b = degrade(&scene, &ErrorProfile { seed: seed_b, ..profile_b.clone() });
            Ok((seed_scene, seed_a, seed_b, scene, a, b))
        })
        .collect::<Result<_, SynthError>>()?;

    for sub in ["gt", "source_a", "source_b"] {
        std::fs::create_dir_all(out_dir.join(sub)).map_err(|e| {
            crate::error::FileError::io(out_dir.join(sub).display().to_string(), e)
        })?;
    }

    let ext = match format {
        MaskFormat::Png16 => "png",
        MaskFormat::Rle => "csv",
    };
    let mut rows = Vec::with_capacity(n_images);
    for (i, (seed_scene, seed_a, seed_b, scene, a, b)) in images.iter().enumerate() {
        let image_id = format!("scene_{i:05}");
        let gt_path = format!("gt/{image_id}.png");
        let path_a = format!("source_a/{image_id}.{ext}");
        let path_b = format!("source_b/{image_id}.{ext}");
        write_label_png(&out_dir.join(&gt_path), scene)?;
        write_instances(&out_dir.join(&path_a), &image_id, a, scene.height(), scene.width(), format)?;
        write_instances(&out_dir.join(&path_b), &image_id, b, scene.height(), scene.width(), format)?;
        rows.push(ManifestRow {
            image_id,
            gt_path,
            path_a,
            path_b,
            seed_scene: *seed_scene,
            seed_a: *seed_a,
            seed_b: *seed_b,
        });
    }
    write_manifest(&out_dir.join("manifest.csv"), &rows)?;
    Ok(rows)
}

/// Writes the corpus manifest: `ImageId,GtPath,PathA,PathB,SeedScene,SeedA,SeedB`.
pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<(), SynthError> {
    crate::io::write_manifest_csv(path, rows).map_err(SynthError::File)
}

/// Reads a corpus manifest written by [`write_manifest`].
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>, SynthError> {
    crate::io::read_manifest_csv(path).map_err(SynthError::File)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::cluster_sizes;
    use crate::mask::OverlapPolicy;

    fn small_cfg(seed: u64) -> SceneConfig {
        SceneConfig {
            height: 96,
            width: 96,
            nucleus_count_range: (4, 7),
            semi_axis_range: (3.0, 7.0),
            cluster_probability: 0.4,
            seed,
        }
    }

    #[test]
    fn zero_count_range_gives_empty_map() {
        let cfg = SceneConfig { nucleus_count_range: (0, 0), ..small_cfg(1) };
        let map = generate_scene(&cfg).unwrap();
        assert!(map.instance_ids().is_empty());
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_scene(&small_cfg(7)).unwrap();
        let b = generate_scene(&small_cfg(7)).unwrap();
        assert_eq!(a, b);
        let c = generate_scene(&small_cfg(8)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn scenes_have_canonical_ids_and_min_area() {
        for seed in 0..5 {
            let map = generate_scene(&small_cfg(seed)).unwrap();
            let instances = instances_from_label_map(&map);
            assert!(!instances.is_empty());
            let ids: Vec<u32> = instances.iter().map(|m| m.id()).collect();
            let expect: Vec<u32> = (1..=instances.len() as u32).collect();
            assert_eq!(ids, expect);
            for inst in &instances {
                assert!(inst.area() >= MIN_NUCLEUS_AREA);
            }
        }
    }

    #[test]
    fn forced_clustering_produces_clusters() {
        let cfg = SceneConfig {
            nucleus_count_range: (5, 5),
            cluster_probability: 1.0,
            ..small_cfg(3)
        };
        let map = generate_scene(&cfg).unwrap();
        let sizes = cluster_sizes(&map, 1).unwrap();
        assert!(sizes.values().any(|&s| s >= 2), "no cluster formed: {sizes:?}");
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad_range = SceneConfig { nucleus_count_range: (3, 1), ..small_cfg(0) };
        assert!(generate_scene(&bad_range).is_err());
        let bad_axis = SceneConfig { semi_axis_range: (0.5, 2.0), ..small_cfg(0) };
        assert!(generate_scene(&bad_axis).is_err());
        let bad_p = SceneConfig { cluster_probability: 1.5, ..small_cfg(0) };
        assert!(generate_scene(&bad_p).is_err());
    }

    #[test]
    fn identity_profile_returns_gt_instances() {
        let map = generate_scene(&small_cfg(11)).unwrap();
        let out = degrade(&map, &ErrorProfile::identity(99));
        assert_eq!(out, instances_from_label_map(&map));
    }

    #[test]
    fn full_drop_empties_the_prediction() {
        let map = generate_scene(&small_cfg(12)).unwrap();
        let profile = ErrorProfile { p_drop: 1.0, ..ErrorProfile::identity(5) };
        assert!(degrade(&map, &profile).is_empty());
    }

    #[test]
    fn forced_merge_unions_touching_pair() {
        // Two rectangles one empty column apart (Chebyshev distance 2).
        let mut labels = vec![0u32; 12 * 12];
        for r in 3..7 {
            for c in 2..5 {
                labels[r * 12 + c] = 1;
            }
            for c in 6..9 {
                labels[r * 12 + c] = 2;
            }
        }
        let map = LabelMap::new(12, 12, labels).unwrap();
        let profile = ErrorProfile {
            p_merge: 1.0,
            merge_gap: 2,
            ..ErrorProfile::identity(17)
        };
        let out = degrade(&map, &profile);
        assert_eq!(out.len(), 1);
        // The closing bridges the one-column gap, so the union is at least
        // both inputs plus the seam.
        assert!(out[0].area() >= 24);
    }

    #[test]
    fn merge_gap_zero_never_merges() {
        let map = generate_scene(&small_cfg(13)).unwrap();
        let n = instances_from_label_map(&map).len();
        let profile = ErrorProfile {
            p_merge: 1.0,
            merge_gap: 0,
            ..ErrorProfile::identity(4)
        };
        assert_eq!(degrade(&map, &profile).len(), n);
    }

    #[test]
    fn forced_split_cuts_across_minor_axis() {
        // A 3x11 horizontal bar splits into left and right halves.
        let mut labels = vec![0u32; 8 * 16];
        for r in 2..5 {
            for c in 2..13 {
                labels[r * 16 + c] = 1;
            }
        }
        let map = LabelMap::new(8, 16, labels).unwrap();
        let profile = ErrorProfile { p_split: 1.0, ..ErrorProfile::identity(9) };
        let out = degrade(&map, &profile);
        assert_eq!(out.len(), 2);
        let total: usize = out.iter().map(|m| m.area()).sum();
        assert_eq!(total, 33);
        // The cut is across the minor axis: halves separate by column.
        assert!(out[0].bbox().max_col < out[1].bbox().min_col);
    }

    #[test]
    fn degrade_is_deterministic() {
        let map = generate_scene(&small_cfg(21)).unwrap();
        let profile = ErrorProfile::clumper(77);
        assert_eq!(degrade(&map, &profile), degrade(&map, &profile));
    }

    #[test]
    fn degraded_ids_are_canonical() {
        let map = generate_scene(&small_cfg(22)).unwrap();
        for profile in [ErrorProfile::clumper(3), ErrorProfile::splitter(3)] {
            let out = degrade(&map, &profile);
            for (i, inst) in out.iter().enumerate() {
                assert_eq!(inst.id(), i as u32 + 1);
            }
            let firsts: Vec<(usize, usize)> =
                out.iter().map(|m| m.first_pixel()).collect();
            let mut sorted = firsts.clone();
            sorted.sort();
            assert_eq!(firsts, sorted);
        }
    }

    #[test]
    fn derived_seeds_are_distinct_and_stable() {
        let seeds: Vec<u64> = (0..32).map(|k| derive_seed(42, k)).collect();
        let mut dedup = seeds.clone();
        dedup.sort_unstable();
        dedup.dedup();
        assert_eq!(dedup.len(), seeds.len());
        assert_eq!(derive_seed(42, 0), derive_seed(42, 0));
        assert_ne!(derive_seed(42, 0), derive_seed(43, 0));
    }

    #[test]
    fn corpus_roundtrip_and_reproducibility() {
        let dir1 = tempfile::tempdir().unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        let cfg = small_cfg(42);
        let pa = ErrorProfile::clumper(0);
        let pb = ErrorProfile::splitter(0);
        let rows1 =
            make_corpus(2, &cfg, &pa, &pb, dir1.path(), MaskFormat::Png16).unwrap();
        let rows2 =
            make_corpus(2, &cfg, &pa, &pb, dir2.path(), MaskFormat::Png16).unwrap();
        assert_eq!(rows1, rows2);
        assert_eq!(rows1.len(), 2);

        let reread = read_manifest(&dir1.path().join("manifest.csv")).unwrap();
        assert_eq!(reread, rows1);

        for row in &rows1 {
            for rel in [&row.gt_path, &row.path_a, &row.path_b] {
                let b1 = std::fs::read(dir1.path().join(rel)).unwrap();
                let b2 = std::fs::read(dir2.path().join(rel)).unwrap();
                assert_eq!(b1, b2, "{rel} differs between identical runs");
            }
        }

        let gt = crate::io::read_label_png(&dir1.path().join(&rows1[0].gt_path)).unwrap();
        assert_eq!(gt, generate_scene(&SceneConfig { seed: rows1[0].seed_scene, ..cfg })
            .unwrap());
    }

    #[test]
    fn rle_corpus_preserves_overlapping_candidates() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_cfg(5);
        let pa = ErrorProfile::clumper(1);
        let pb = ErrorProfile::splitter(1);
        let rows = make_corpus(3, &cfg, &pa, &pb, dir.path(), MaskFormat::Rle).unwrap();
        for row in &rows {
            assert!(row.path_a.ends_with(".csv"));
            let gt = crate::io::read_label_png(&dir.path().join(&row.gt_path)).unwrap();
            let expect = degrade(
                &gt,
                &ErrorProfile { seed: row.seed_a, ..pa.clone() },
            );
            let got = crate::io::read_instances(
                &dir.path().join(&row.path_a),
                gt.height(),
                gt.width(),
                MaskFormat::Rle,
            )
            .unwrap();
            assert_eq!(got, expect);
        }
    }

    #[test]
    fn label_maps_from_scenes_fit_png16() {
        let map = generate_scene(&small_cfg(30)).unwrap();
        let instances = instances_from_label_map(&map);
        let back = crate::mask::label_map_from_instances(
            &instances,
            map.height(),
            map.width(),
            OverlapPolicy::Error,
        )
        .unwrap();
        assert_eq!(back, map);
    }
}
