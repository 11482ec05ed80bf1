//! Dictionary analysis: angles between output-layer atoms, greedy pairing of
//! the most opposed atoms, angle histograms, hidden-unit activation traces and
//! atom montages.

use std::fmt::Write as _;

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::imaging::GrayImage;
use crate::nn::{dual_pathway, ActivationKind, NetworkParams};

/// Output-layer atoms, one per column of a `d x K` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Dictionary {
    atoms: Array2<f64>,
}

impl Dictionary {
    pub fn new(atoms: Array2<f64>) -> Result<Self> {
        if atoms.ncols() == 0 || atoms.nrows() == 0 {
            return Err(Error::Contract("dictionary has no atoms".into()));
        }
        for (k, col) in atoms.columns().into_iter().enumerate() {
            if col.dot(&col).sqrt() <= 1e-12 {
                return Err(Error::Contract(format!("atom {k} has zero norm")));
            }
        }
        Ok(Dictionary { atoms })
    }

    /// Columns of the output layer's weight matrix (for a tied autoencoder,
    /// the rows of the encoder weight).
    pub fn from_params(params: &NetworkParams) -> Result<Self> {
        Dictionary::new(params.weight(params.layers().len() - 1).to_owned())
    }

    pub fn atoms(&self) -> ArrayView2<'_, f64> {
        self.atoms.view()
    }

    pub fn atom(&self, k: usize) -> ArrayView1<'_, f64> {
        self.atoms.column(k)
    }

    pub fn atom_dim(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn len(&self) -> usize {
        self.atoms.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Pairwise angles in degrees; symmetric with a zero diagonal.
pub fn angle_matrix(dict: &Dictionary) -> Array2<f64> {
    let k = dict.len();
    let gram = dict.atoms.t().dot(&dict.atoms);
    let norms: Vec<f64> = (0..k).map(|i| gram[[i, i]].sqrt()).collect();
    let mut angles = Array2::zeros((k, k));
    for i in 0..k {
        for j in i + 1..k {
            let cos = (gram[[i, j]] / (norms[i] * norms[j])).clamp(-1.0, 1.0);
            let a = cos.acos().to_degrees();
            angles[[i, j]] = a;
            angles[[j, i]] = a;
        }
    }
    angles
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AtomPair {
    pub first: usize,
    pub second: usize,
    pub angle_deg: f64,
}

/// Atoms grouped into pairs in order of decreasing within-pair angle.
#[derive(Clone, Debug, PartialEq)]
pub struct PairOrdering {
    pub pairs: Vec<AtomPair>,
    /// The atom left over when the dictionary size is odd.
    pub leftover: Option<usize>,
}

impl PairOrdering {
    /// Atom indices pair by pair, leftover last.
    pub fn atom_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = self.pairs.iter().flat_map(|p| [p.first, p.second]).collect();
        order.extend(self.leftover);
        order
    }

    pub fn fraction_above(&self, threshold_deg: f64) -> f64 {
        if self.pairs.is_empty() {
            return 0.0;
        }
        let above = self.pairs.iter().filter(|p| p.angle_deg > threshold_deg).count();
        above as f64 / self.pairs.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("first,second,angle_deg\n");
        for p in &self.pairs {
            writeln!(out, "{},{},{}", p.first, p.second, p.angle_deg).unwrap();
        }
        out
    }
}

/// Repeatedly takes the pair of remaining atoms with the largest angle.
/// Ties go to the smallest first index, then the smallest second index.
pub fn greedy_pair_sort(dict: &Dictionary) -> Result<PairOrdering> {
    let k = dict.len();
    if k < 2 {
        return Err(Error::Contract("pairing needs at least two atoms".into()));
    }
    let angles = angle_matrix(dict);
    let mut remaining: Vec<usize> = (0..k).collect();
    let mut pairs = Vec::with_capacity(k / 2);
    while remaining.len() >= 2 {
        let mut best = (0, 1, f64::NEG_INFINITY);
        for a in 0..remaining.len() {
            for b in a + 1..remaining.len() {
                let angle = angles[[remaining[a], remaining[b]]];
                if angle > best.2 {
                    best = (a, b, angle);
                }
            }
        }
        let (a, b, angle_deg) = best;
        pairs.push(AtomPair {
            first: remaining[a],
            second: remaining[b],
            angle_deg,
        });
        remaining.remove(b);
        remaining.remove(a);
    }
    Ok(PairOrdering {
        pairs,
        leftover: remaining.first().copied(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AngleHistogram {
    pub bin_width_deg: f64,
    pub counts: Vec<usize>,
}

impl AngleHistogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_start_deg,bin_end_deg,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            let lo = i as f64 * self.bin_width_deg;
            writeln!(out, "{},{},{}", lo, lo + self.bin_width_deg, c).unwrap();
        }
        out
    }
}

/// Counts of the angles of all unordered atom pairs over `[0, 180]` degrees.
/// The last bin is closed on the right.
pub fn angle_histogram(dict: &Dictionary, bin_width_deg: f64) -> Result<AngleHistogram> {
    let bins = 180.0 / bin_width_deg;
    if !(bin_width_deg > 0.0) || (bins - bins.round()).abs() > 1e-9 || bins.round() < 1.0 {
        return Err(Error::Config(format!(
            "bin width {bin_width_deg} must evenly divide 180 degrees"
        )));
    }
    let n_bins = bins.round() as usize;
    let angles = angle_matrix(dict);
    let mut counts = vec![0; n_bins];
    let k = dict.len();
    for i in 0..k {
        for j in i + 1..k {
            let bin = ((angles[[i, j]] / bin_width_deg) as usize).min(n_bins - 1);
            counts[bin] += 1;
        }
    }
    Ok(AngleHistogram {
        bin_width_deg,
        counts,
    })
}

/// Fraction of greedy pairs whose angle exceeds `threshold_deg`.
pub fn reversed_pair_fraction(dict: &Dictionary, threshold_deg: f64) -> Result<f64> {
    if !(threshold_deg > 90.0 && threshold_deg <= 180.0) {
        return Err(Error::Config(format!(
            "reversed-pair threshold {threshold_deg} must lie in (90, 180]"
        )));
    }
    Ok(greedy_pair_sort(dict)?.fraction_above(threshold_deg))
}

/// One sample of a hidden unit's response.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    /// Pre-rectifier value of the unit.
    pub original: f64,
    /// Pre-rectifier value of its companion.
    pub companion: f64,
    /// Output of the unit after its nonlinearity.
    pub equivalent: f64,
}

pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from("original_preactivation,companion_preactivation,equivalent_activation\n");
    for r in rows {
        writeln!(out, "{},{},{}", r.original, r.companion, r.equivalent).unwrap();
    }
    out
}

/// Responses of first-hidden-layer unit `unit` to `patches`, sorted by the
/// original pre-activation in descending order.
///
/// For a dual-pathway layer with pre-activation `z = w·x + c` and threshold
/// `t`, the unit/companion pair of the paired form sees `z + t` and `-z + t`,
/// and the compact unit outputs `g(z; t)`. Plain layers have no built-in
/// companion, so `companion` must name the unit to report alongside (usually
/// its greedy pairing partner).
pub fn activation_trace(
    params: &NetworkParams,
    patches: ArrayView2<f64>,
    unit: usize,
    companion: Option<usize>,
) -> Result<Vec<TraceRow>> {
    let layer = &params.layers()[0];
    if unit >= layer.out_dim {
        return Err(Error::Contract(format!(
            "unit {unit} out of range for a layer of {} units",
            layer.out_dim
        )));
    }
    if patches.ncols() != layer.in_dim {
        return Err(Error::dims("patch length", layer.in_dim, patches.ncols()));
    }
    let w = params.weight(0);
    let pre = |x: ArrayView1<f64>, u: usize| w.row(u).dot(&x) + layer.bias[u];

    let mut rows: Vec<TraceRow> = match &layer.activation {
        ActivationKind::DualPathway { thresholds } => {
            let t = thresholds[unit];
            patches
                .rows()
                .into_iter()
                .map(|x| {
                    let z = pre(x, unit);
                    TraceRow {
                        original: z + t,
                        companion: -z + t,
                        equivalent: dual_pathway(z, t),
                    }
                })
                .collect()
        }
        act => {
            let other = companion.ok_or_else(|| {
                Error::Contract("plain layers need an explicit companion unit".into())
            })?;
            if other >= layer.out_dim {
                return Err(Error::Contract(format!("companion unit {other} out of range")));
            }
            patches
                .rows()
                .into_iter()
                .map(|x| {
                    let z = pre(x, unit);
                    TraceRow {
                        original: z,
                        companion: pre(x, other),
                        equivalent: act.eval(&[z]).expect("scalar activation")[0],
                    }
                })
                .collect()
        }
    };
    rows.sort_by(|a, b| b.original.total_cmp(&a.original));
    Ok(rows)
}

/// Tiles every atom as a `patch_side x patch_side` square, in greedy-pair
/// order with each pair side by side.
///
/// The grid has an even number of columns `cols` (the smallest even number
/// at least `ceil(sqrt(K))`) and `rows = ceil(K / cols)`, giving an image of
/// `rows * patch_side + rows - 1` by `cols * patch_side + cols - 1` pixels
/// with 1-pixel separators at intensity 0. Each atom is independently mapped
/// affinely onto `[0, 1]`; a constant atom is drawn at 0.5.
pub fn atom_montage(dict: &Dictionary, patch_side: usize) -> Result<GrayImage> {
    if patch_side == 0 || patch_side * patch_side != dict.atom_dim() {
        return Err(Error::Contract(format!(
            "atoms of length {} are not {patch_side}x{patch_side} patches",
            dict.atom_dim()
        )));
    }
    let order = if dict.len() >= 2 {
        greedy_pair_sort(dict)?.atom_order()
    } else {
        vec![0]
    };
    let k = order.len();
    let side = (k as f64).sqrt().ceil() as usize;
    let cols = (side + side % 2).max(2);
    let rows = k.div_ceil(cols);
    let height = rows * patch_side + rows - 1;
    let width = cols * patch_side + cols - 1;
    let mut pixels = vec![0.0; height * width];
    for (slot, &atom) in order.iter().enumerate() {
        let col = dict.atom(atom);
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let r0 = (slot / cols) * (patch_side + 1);
        let c0 = (slot % cols) * (patch_side + 1);
        for i in 0..patch_side {
            for j in 0..patch_side {
                let v = col[i * patch_side + j];
                pixels[(r0 + i) * width + c0 + j] = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
            }
        }
    }
    GrayImage::new(height, width, pixels)
}
