use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::GrayImage;
use crate::error::{Error, Result};

/// Patch geometry: square input patches, the centred square block the
/// network reconstructs, and the step between neighbouring patches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub input_size: usize,
    pub output_size: usize,
    pub stride: usize,
}

impl GridSpec {
    pub fn new(input_size: usize, output_size: usize, stride: usize) -> Result<Self> {
        let spec = GridSpec {
            input_size,
            output_size,
            stride,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 || self.output_size == 0 || self.stride == 0 {
            return Err(Error::Config("patch sizes and stride must be positive".into()));
        }
        if self.output_size > self.input_size {
            return Err(Error::Config(format!(
                "output block {} is larger than input patch {}",
                self.output_size, self.input_size
            )));
        }
        if !(self.input_size - self.output_size).is_multiple_of(2) {
            return Err(Error::Config(format!(
                "output block {} cannot be centred in input patch {}",
                self.output_size, self.input_size
            )));
        }
        Ok(())
    }

    /// Distance from a patch edge to its output block.
    pub fn offset(&self) -> usize {
        (self.input_size - self.output_size) / 2
    }

    pub fn input_len(&self) -> usize {
        self.input_size * self.input_size
    }

    pub fn output_len(&self) -> usize {
        self.output_size * self.output_size
    }
}

/// Top-left corners of the input patches laid over an image, in row-major
/// scan order.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchGrid {
    spec: GridSpec,
    height: usize,
    width: usize,
    positions: Vec<(usize, usize)>,
}

/// Offsets `0, stride, 2 stride, ...` plus a final one flush with the edge.
fn axis_positions(len: usize, size: usize, stride: usize) -> Vec<usize> {
    let last = len - size;
    let mut v: Vec<usize> = (0..=last).step_by(stride).collect();
    if *v.last().expect("non-empty") != last {
        v.push(last);
    }
    v
}

impl PatchGrid {
    /// Regular grid over a `height x width` image; the last row and column of
    /// patches are moved flush with the image edge.
    pub fn new(spec: GridSpec, height: usize, width: usize) -> Result<Self> {
        spec.validate()?;
        if height < spec.input_size || width < spec.input_size {
            return Err(Error::Contract(format!(
                "{height}x{width} image is smaller than a {0}x{0} patch",
                spec.input_size
            )));
        }
        let rows = axis_positions(height, spec.input_size, spec.stride);
        let cols = axis_positions(width, spec.input_size, spec.stride);
        let positions = rows
            .iter()
            .flat_map(|&r| cols.iter().map(move |&c| (r, c)))
            .collect();
        Ok(PatchGrid {
            spec,
            height,
            width,
            positions,
        })
    }

    /// Grid with explicit patch positions. Bounds are checked on use.
    pub fn with_positions(
        spec: GridSpec,
        height: usize,
        width: usize,
        positions: Vec<(usize, usize)>,
    ) -> Result<Self> {
        spec.validate()?;
        Ok(PatchGrid {
            spec,
            height,
            width,
            positions,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn positions(&self) -> &[(usize, usize)] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    fn check_bounds(&self) -> Result<()> {
        let n = self.spec.input_size;
        if let Some(&(r, c)) = self
            .positions
            .iter()
            .find(|&&(r, c)| r + n > self.height || c + n > self.width)
        {
            return Err(Error::Contract(format!(
                "patch at ({r}, {c}) extends past the {}x{} image",
                self.height, self.width
            )));
        }
        Ok(())
    }
}

/// Vectorised input patches, each minus its own mean, and those means.
pub fn extract_patches(img: &GrayImage, grid: &PatchGrid) -> Result<(Array2<f64>, Array1<f64>)> {
    if img.dims() != grid.dims() {
        return Err(Error::Contract(format!(
            "grid laid out for {:?} but image is {:?}",
            grid.dims(),
            img.dims()
        )));
    }
    grid.check_bounds()?;
    let n = grid.spec.input_size;
    let mut patches = Array2::zeros((grid.len(), n * n));
    let mut dc = Array1::zeros(grid.len());
    for (i, &(r0, c0)) in grid.positions.iter().enumerate() {
        let mut row = patches.row_mut(i);
        let mut k = 0;
        for r in r0..r0 + n {
            for c in c0..c0 + n {
                row[k] = img.get(r, c);
                k += 1;
            }
        }
        let mean = row.sum() / (n * n) as f64;
        row.mapv_inplace(|v| v - mean);
        dc[i] = mean;
    }
    Ok((patches, dc))
}

/// Gaussian weights over an `size x size` block, row-major, with standard
/// deviation `size / 4` about the block centre.
pub fn aggregation_weights(size: usize) -> Vec<f64> {
    let sigma = size as f64 / 4.0;
    let centre = (size as f64 - 1.0) / 2.0;
    let mut w = Vec::with_capacity(size * size);
    for r in 0..size {
        for c in 0..size {
            let (u, v) = (r as f64 - centre, c as f64 - centre);
            w.push((-(u * u + v * v) / (2.0 * sigma * sigma)).exp());
        }
    }
    w
}

/// Places each output block (plus its patch's dc) at the centre of its source
/// patch and averages overlaps with Gaussian weights.
///
/// Pixels no block reaches are copied from `fallback`; without a fallback
/// they are reported as a coverage error.
pub fn aggregate(
    outputs: ArrayView2<f64>,
    grid: &PatchGrid,
    dc: ArrayView1<f64>,
    fallback: Option<&GrayImage>,
) -> Result<GrayImage> {
    let spec = grid.spec;
    if outputs.nrows() != grid.len() {
        return Err(Error::dims("output rows", grid.len(), outputs.nrows()));
    }
    if outputs.ncols() != spec.output_len() {
        return Err(Error::dims("output block length", spec.output_len(), outputs.ncols()));
    }
    if dc.len() != grid.len() {
        return Err(Error::dims("dc entries", grid.len(), dc.len()));
    }
    if let Some(f) = fallback {
        if f.dims() != grid.dims() {
            return Err(Error::Contract("fallback image size differs from grid".into()));
        }
    }
    grid.check_bounds()?;

    let (h, w) = grid.dims();
    let weights = aggregation_weights(spec.output_size);
    let mut num = vec![0.0; h * w];
    let mut den = vec![0.0; h * w];
    let m = spec.output_size;
    let off = spec.offset();
    for (i, &(r0, c0)) in grid.positions.iter().enumerate() {
        let block = outputs.row(i);
        let base = dc[i];
        for br in 0..m {
            let row = (r0 + off + br) * w + c0 + off;
            for bc in 0..m {
                let k = br * m + bc;
                num[row + bc] += weights[k] * (block[k] + base);
                den[row + bc] += weights[k];
            }
        }
    }

    let mut gaps = Vec::new();
    let pixels = (0..h * w)
        .map(|p| {
            if den[p] > 0.0 {
                num[p] / den[p]
            } else if let Some(f) = fallback {
                f.pixels()[p]
            } else {
                gaps.push((p / w, p % w));
                0.0
            }
        })
        .collect();
    if !gaps.is_empty() {
        return Err(Error::Coverage { pixels: gaps });
    }
    GrayImage::new(h, w, pixels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(h: usize, w: usize) -> GrayImage {
        GrayImage::from_fn(h, w, |r, c| ((r * 7 + c * 3) % 23) as f64 / 23.0).unwrap()
    }

    #[test]
    fn grid_is_clamped_to_edges() {
        let grid = PatchGrid::new(GridSpec::new(5, 3, 3).unwrap(), 12, 10).unwrap();
        let rows: Vec<usize> = grid.positions().iter().map(|p| p.0).collect();
        assert!(rows.contains(&0) && rows.contains(&7));
        let cols: Vec<usize> = grid.positions().iter().map(|p| p.1).collect();
        assert!(cols.contains(&5));
        assert_eq!(grid.len(), 4 * 3);
    }

    #[test]
    fn one_patch_when_stride_equals_image() {
        let img = ramp(17, 17);
        let grid = PatchGrid::new(GridSpec::new(17, 9, 17).unwrap(), 17, 17).unwrap();
        let (patches, dc) = extract_patches(&img, &grid).unwrap();
        assert_eq!(patches.dim(), (1, 289));
        assert!((dc[0] - img.mean()).abs() < 1e-12);
    }

    #[test]
    fn constant_image_gives_zero_rows() {
        let img = GrayImage::filled(9, 9, 0.3).unwrap();
        let grid = PatchGrid::new(GridSpec::new(5, 3, 2).unwrap(), 9, 9).unwrap();
        let (patches, dc) = extract_patches(&img, &grid).unwrap();
        assert!(patches.iter().all(|v| v.abs() < 1e-15));
        assert!(dc.iter().all(|&d| (d - 0.3).abs() < 1e-15));
    }

    #[test]
    fn rows_have_zero_mean() {
        let img = ramp(20, 20);
        let grid = PatchGrid::new(GridSpec::new(7, 3, 1).unwrap(), 20, 20).unwrap();
        let (patches, _) = extract_patches(&img, &grid).unwrap();
        for row in patches.rows() {
            assert!(row.mean().unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn out_of_bounds_position() {
        let img = ramp(8, 8);
        let grid = PatchGrid::with_positions(GridSpec::new(5, 3, 1).unwrap(), 8, 8, vec![(4, 0)]).unwrap();
        assert!(matches!(extract_patches(&img, &grid), Err(Error::Contract(_))));
    }

    fn centre_blocks(patches: &Array2<f64>, spec: &GridSpec) -> Array2<f64> {
        let n = spec.input_size;
        let m = spec.output_size;
        let o = spec.offset();
        Array2::from_shape_fn((patches.nrows(), m * m), |(i, k)| {
            patches[[i, (o + k / m) * n + o + k % m]]
        })
    }

    #[test]
    fn identity_outputs_reconstruct_covered_image() {
        let img = ramp(21, 19);
        let spec = GridSpec::new(5, 5, 2).unwrap();
        let grid = PatchGrid::new(spec, 21, 19).unwrap();
        let (patches, dc) = extract_patches(&img, &grid).unwrap();
        let out = aggregate(patches.view(), &grid, dc.view(), None).unwrap();
        for (a, b) in img.pixels().iter().zip(out.pixels()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_patch_block_is_reproduced() {
        let img = ramp(5, 5);
        let spec = GridSpec::new(5, 3, 5).unwrap();
        let grid = PatchGrid::new(spec, 5, 5).unwrap();
        let (patches, dc) = extract_patches(&img, &grid).unwrap();
        let blocks = centre_blocks(&patches, &spec);
        let out = aggregate(blocks.view(), &grid, dc.view(), Some(&img)).unwrap();
        for r in 0..5 {
            for c in 0..5 {
                assert!((out.get(r, c) - img.get(r, c)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn duplicate_blocks_equal_single_block() {
        let spec = GridSpec::new(3, 3, 1).unwrap();
        let one = PatchGrid::with_positions(spec, 3, 3, vec![(0, 0)]).unwrap();
        let two = PatchGrid::with_positions(spec, 3, 3, vec![(0, 0), (0, 0)]).unwrap();
        let block = Array2::from_shape_fn((1, 9), |(_, k)| k as f64 * 0.1);
        let doubled = ndarray::concatenate![ndarray::Axis(0), block, block];
        let a = aggregate(block.view(), &one, Array1::from(vec![0.2]).view(), None).unwrap();
        let b = aggregate(doubled.view(), &two, Array1::from(vec![0.2, 0.2]).view(), None).unwrap();
        for (x, y) in a.pixels().iter().zip(b.pixels()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_blocks_give_constant_image() {
        let spec = GridSpec::new(5, 5, 1).unwrap();
        let grid = PatchGrid::new(spec, 11, 13).unwrap();
        let blocks = Array2::from_elem((grid.len(), 25), 0.0);
        let dc = Array1::from_elem(grid.len(), 0.42);
        let out = aggregate(blocks.view(), &grid, dc.view(), None).unwrap();
        assert!(out.pixels().iter().all(|v| (v - 0.42).abs() < 1e-14));
    }

    #[test]
    fn uncovered_border_needs_fallback() {
        let img = ramp(9, 9);
        let spec = GridSpec::new(5, 3, 1).unwrap();
        let grid = PatchGrid::new(spec, 9, 9).unwrap();
        let (patches, dc) = extract_patches(&img, &grid).unwrap();
        let blocks = centre_blocks(&patches, &spec);
        match aggregate(blocks.view(), &grid, dc.view(), None) {
            Err(Error::Coverage { pixels }) => {
                assert_eq!(pixels.len(), 81 - 49);
                assert_eq!(pixels[0], (0, 0));
            }
            other => panic!("unexpected {other:?}"),
        }
        let out = aggregate(blocks.view(), &grid, dc.view(), Some(&img)).unwrap();
        for (a, b) in img.pixels().iter().zip(out.pixels()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn weights_are_gaussian_about_centre() {
        let w = aggregation_weights(9);
        assert_eq!(w[4 * 9 + 4], 1.0);
        // offset (0, 4) with sigma 9/4
        let expect = (-16.0f64 / (2.0 * 2.25 * 2.25)).exp();
        assert!((w[4 * 9 + 8] - expect).abs() < 1e-15);
        assert_eq!(w[0], w[80]);
    }

    #[test]
    fn rejects_row_count_mismatch() {
        let spec = GridSpec::new(3, 1, 1).unwrap();
        let grid = PatchGrid::new(spec, 4, 4).unwrap();
        let out = Array2::zeros((grid.len() - 1, 1));
        let dc = Array1::zeros(grid.len() - 1);
        assert!(aggregate(out.view(), &grid, dc.view(), None).is_err());
    }
}
