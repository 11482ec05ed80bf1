//! Conversion between the paired-rectifier form of a dual-pathway network and
//! its compact form.
//!
//! In the paired form each hidden unit `i` is two rectifier neurons: one with
//! input weights `w_i` and bias `b_i`, and a companion with `-w_i` and `b'_i`;
//! the consuming layer sees them through columns `v_i` and `-v_i`. The pair is
//! exactly one unit with activation `g(z; t)`, pre-activation bias
//! `c_i = (b_i - b'_i) / 2` and threshold `t_i = (b_i + b'_i) / 2`.

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};

use super::activation::{ActivationKind, ActivationTag};
use super::network::{Layer, NetworkParams, Weight};
use crate::error::{Error, Result};

fn stack_rows(w: ArrayView2<f64>) -> Array2<f64> {
    concatenate(Axis(0), &[w, (-&w).view()]).expect("same widths")
}

fn stack_cols(w: ArrayView2<f64>) -> Array2<f64> {
    concatenate(Axis(1), &[w, (-&w).view()]).expect("same heights")
}

/// Which sides of layer `l`'s weight are doubled by the expansion:
/// rows when the layer is hidden, columns when its input comes from one.
fn expansion_sides(l: usize, n_layers: usize) -> (bool, bool) {
    (l + 1 < n_layers, l > 0)
}

/// A tie `l -> k` survives the transform only if the doubled sides swap.
fn check_tie(l: usize, k: usize, n_layers: usize) -> Result<()> {
    let (rows_l, cols_l) = expansion_sides(l, n_layers);
    let (rows_k, cols_k) = expansion_sides(k, n_layers);
    if rows_l != cols_k || cols_l != rows_k {
        return Err(Error::UnsupportedStructure(format!(
            "tie from layer {l} to layer {k} cannot be preserved by the pathway transform"
        )));
    }
    Ok(())
}

/// Rewrites a compact dual-pathway network as a plain rectifier network with
/// every hidden layer doubled into unit/companion pairs.
///
/// Every hidden layer must be dual-pathway; the output layer keeps its
/// activation and bias.
pub fn expand_dual(params: &NetworkParams) -> Result<NetworkParams> {
    let layers = params.layers();
    let n = layers.len();
    if n < 2 {
        return Err(Error::UnsupportedStructure("network has no hidden layer".into()));
    }
    if layers[n - 1].activation.tag() == ActivationTag::DualPathway {
        return Err(Error::UnsupportedStructure(
            "output layer cannot be dual-pathway".into(),
        ));
    }

    let mut out = Vec::with_capacity(n);
    for (l, layer) in layers.iter().enumerate() {
        let (rows, cols) = expansion_sides(l, n);
        let (activation, bias) = if rows {
            let t = layer.activation.thresholds().ok_or_else(|| {
                Error::UnsupportedStructure(format!(
                    "hidden layer {l} uses {} instead of dual_pathway",
                    layer.activation.tag()
                ))
            })?;
            let c = &layer.bias;
            let bias = concatenate(Axis(0), &[(c + t).view(), (t - c).view()]).expect("1-d");
            (ActivationKind::Rectifier, bias)
        } else {
            (layer.activation.clone(), layer.bias.clone())
        };
        let in_dim = if cols { 2 * layer.in_dim } else { layer.in_dim };
        let out_dim = if rows { 2 * layer.out_dim } else { layer.out_dim };
        let expanded = match &layer.weight {
            Weight::Owned(w) => {
                let mut w = w.clone();
                if cols {
                    w = stack_cols(w.view());
                }
                if rows {
                    w = stack_rows(w.view());
                }
                Layer::dense(w, bias, activation)
            }
            Weight::Tied(k) => {
                check_tie(l, *k, n)?;
                Layer::tied(*k, in_dim, out_dim, bias, activation)
            }
        };
        out.push(expanded);
    }
    NetworkParams::new(out)
}

fn halves_negated(a: ArrayView2<f64>, b: ArrayView2<f64>) -> bool {
    a.iter().zip(b.iter()).all(|(x, y)| *y == -*x)
}

/// Inverse of [`expand_dual`]: folds unit/companion rectifier pairs back into
/// dual-pathway units.
///
/// Hidden weights must have the exact form `[W; -W]` and consuming weights
/// `[V, -V]`; any deviation is reported as an unsupported structure.
pub fn compact_dual(params: &NetworkParams) -> Result<NetworkParams> {
    let layers = params.layers();
    let n = layers.len();
    if n < 2 {
        return Err(Error::UnsupportedStructure("network has no hidden layer".into()));
    }
    let mut out = Vec::with_capacity(n);
    for (l, layer) in layers.iter().enumerate() {
        let (rows, cols) = expansion_sides(l, n);
        if rows && (layer.activation != ActivationKind::Rectifier || layer.out_dim % 2 != 0) {
            return Err(Error::UnsupportedStructure(format!(
                "hidden layer {l} is not an even-width rectifier layer"
            )));
        }
        if !rows && layer.activation.tag() == ActivationTag::DualPathway {
            return Err(Error::UnsupportedStructure(
                "output layer cannot be dual-pathway".into(),
            ));
        }
        let out_dim = if rows { layer.out_dim / 2 } else { layer.out_dim };
        let in_dim = if cols { layer.in_dim / 2 } else { layer.in_dim };

        let (activation, bias) = if rows {
            let upper = layer.bias.slice(s![..out_dim]);
            let lower = layer.bias.slice(s![out_dim..]);
            let c: Array1<f64> = (&upper - &lower) / 2.0;
            let t: Array1<f64> = (&upper + &lower) / 2.0;
            (ActivationKind::DualPathway { thresholds: t }, c)
        } else {
            (layer.activation.clone(), layer.bias.clone())
        };

        let compact = match &layer.weight {
            Weight::Owned(w) => {
                let mut w = w.view();
                if rows {
                    let (top, bottom) = w.split_at(Axis(0), out_dim);
                    if !halves_negated(top, bottom) {
                        return Err(Error::UnsupportedStructure(format!(
                            "layer {l}: companion rows are not exact negations"
                        )));
                    }
                    w = top;
                }
                if cols {
                    if layer.in_dim % 2 != 0 {
                        return Err(Error::UnsupportedStructure(format!(
                            "layer {l} has odd input width {}",
                            layer.in_dim
                        )));
                    }
                    let (left, right) = w.split_at(Axis(1), in_dim);
                    if !halves_negated(left, right) {
                        return Err(Error::UnsupportedStructure(format!(
                            "layer {l}: companion columns are not exact negations"
                        )));
                    }
                    w = left;
                }
                Layer::dense(w.to_owned(), bias, activation)
            }
            Weight::Tied(k) => {
                check_tie(l, *k, n)?;
                Layer::tied(*k, in_dim, out_dim, bias, activation)
            }
        };
        out.push(compact);
    }
    NetworkParams::new(out)
}
