//! Tiling of full fields into target/reference patches and stitching back.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PatchIndex {
    pub grid_row: usize,
    pub grid_col: usize,
    pub linear_id: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridShape {
    pub rows: usize,
    pub cols: usize,
}

impl GridShape {
    pub fn for_field(height: usize, width: usize, patch: usize) -> Result<Self> {
        if patch == 0 || height % patch != 0 || width % patch != 0 {
            return Err(Error::Config(format!(
                "patch size {patch} does not divide the {height}x{width} field"
            )));
        }
        Ok(Self { rows: height / patch, cols: width / patch })
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, row: usize, col: usize) -> PatchIndex {
        PatchIndex { grid_row: row, grid_col: col, linear_id: row * self.cols + col }
    }

    pub fn contains(&self, p: PatchIndex) -> bool {
        p.grid_row < self.rows && p.grid_col < self.cols && p.linear_id == p.grid_row * self.cols + p.grid_col
    }

    pub fn iter(&self) -> impl Iterator<Item = PatchIndex> + '_ {
        (0..self.rows).flat_map(move |r| (0..self.cols).map(move |c| self.index(r, c)))
    }
}

/// Which patches condition a target.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceMode {
    /// The target plus its eight neighbours (T = 9).
    #[default]
    Neighborhood,
    /// Every patch of the grid in row-major order (T = rows x cols).
    FullGrid,
}

impl ReferenceMode {
    pub fn count(self, grid: GridShape) -> usize {
        match self {
            ReferenceMode::Neighborhood => 9,
            ReferenceMode::FullGrid => grid.len(),
        }
    }
}

impl std::str::FromStr for ReferenceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "neighborhood" => Ok(ReferenceMode::Neighborhood),
            "full_grid" => Ok(ReferenceMode::FullGrid),
            other => Err(Error::Config(format!("unknown reference mode {other:?}"))),
        }
    }
}

/// History tiles of the conditioning patches, `T x H x W x N`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferencePatchSet {
    pub patches: Tensor,
    pub indices: Vec<PatchIndex>,
}

impl ReferencePatchSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn patch_size(&self) -> (usize, usize) {
        (self.patches.shape()[1], self.patches.shape()[2])
    }

    pub fn steps(&self) -> usize {
        self.patches.shape()[3]
    }

    /// One `H x W` frame of reference patch `i` at step `n`.
    pub fn frame(&self, i: usize, n: usize) -> Tensor {
        time_slice(&self.patches.index_axis0(i), n)
    }

    /// Copy with the reference patches reordered; `order[k]` names the source slot.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let parts: Vec<Tensor> = order.iter().map(|&i| self.patches.index_axis0(i)).collect();
        Self {
            patches: Tensor::stack(&parts).expect("equal patch shapes"),
            indices: order.iter().map(|&i| self.indices[i]).collect(),
        }
    }
}

/// Future tile of one patch, `1 x H x W x M`.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetPatch {
    pub values: Tensor,
    pub index: PatchIndex,
}

impl TargetPatch {
    /// `M x H x W` view of the values.
    pub fn frames(&self) -> Tensor {
        let hwm = self.values.index_axis0(0);
        to_frames_first(&hwm)
    }
}

/// `H x W x S` -> slice `s` as `H x W`.
pub fn time_slice(hws: &Tensor, s: usize) -> Tensor {
    let [h, w, steps] = hws.shape()[..] else { panic!("expected H x W x S tensor") };
    let data = (0..h * w).map(|i| hws.data()[i * steps + s]).collect();
    Tensor::new(vec![h, w], data).unwrap()
}

/// `S x H x W` -> `H x W x S`.
pub fn to_steps_last(shw: &Tensor) -> Tensor {
    let [s, h, w] = shw.shape()[..] else { panic!("expected S x H x W tensor") };
    let src = shw.data();
    let mut out = vec![0.0; s * h * w];
    for t in 0..s {
        for i in 0..h * w {
            out[i * s + t] = src[t * h * w + i];
        }
    }
    Tensor::new(vec![h, w, s], out).unwrap()
}

/// `H x W x S` -> `S x H x W`.
pub fn to_frames_first(hws: &Tensor) -> Tensor {
    let [h, w, s] = hws.shape()[..] else { panic!("expected H x W x S tensor") };
    let src = hws.data();
    let mut out = vec![0.0; s * h * w];
    for t in 0..s {
        for i in 0..h * w {
            out[t * h * w + i] = src[i * s + t];
        }
    }
    Tensor::new(vec![s, h, w], out).unwrap()
}

fn field_dims(field: &Tensor) -> Result<(usize, usize)> {
    match field.shape()[..] {
        [h, w] => Ok((h, w)),
        _ => Err(Error::Dimension(format!("expected an H x W field, got {:?}", field.shape()))),
    }
}

/// Row-major, non-overlapping `patch x patch` tiles.
pub fn decompose(field: &Tensor, patch: usize) -> Result<Vec<(PatchIndex, Tensor)>> {
    let (h, w) = field_dims(field)?;
    let grid = GridShape::for_field(h, w, patch)?;
    Ok(grid
        .iter()
        .map(|idx| {
            let mut data = Vec::with_capacity(patch * patch);
            for r in 0..patch {
                let row = (idx.grid_row * patch + r) * w + idx.grid_col * patch;
                data.extend_from_slice(&field.data()[row..row + patch]);
            }
            (idx, Tensor::new(vec![patch, patch], data).unwrap())
        })
        .collect())
}

/// Splits an `S x H x W` stack into per-patch `H x W x S` tiles indexed by linear id.
pub fn patch_histories(frames: &Tensor, patch: usize) -> Result<(GridShape, Vec<Tensor>)> {
    let [s, h, w] = frames.shape()[..] else {
        return Err(Error::Dimension(format!("expected S x H x W frames, got {:?}", frames.shape())));
    };
    let grid = GridShape::for_field(h, w, patch)?;
    let mut per_patch: Vec<Vec<Tensor>> = vec![Vec::with_capacity(s); grid.len()];
    for t in 0..s {
        for (idx, tile) in decompose(&frames.index_axis0(t), patch)? {
            per_patch[idx.linear_id].push(tile);
        }
    }
    let tiles = per_patch
        .into_iter()
        .map(|frames| to_steps_last(&Tensor::stack(&frames).unwrap()))
        .collect();
    Ok((grid, tiles))
}

/// Offsets, starting north and proceeding clockwise.
const CLOCKWISE: [(isize, isize); 8] = [(-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1)];

/// Conditioning set for `center`: the centre first, then its neighbours.
///
/// `history[k]` is the `H x W x N` history of the patch with linear id `k`.
/// Out-of-grid neighbours are replaced by the centre patch (history and index).
pub fn neighborhood(center: PatchIndex, grid: GridShape, history: &[Tensor]) -> Result<ReferencePatchSet> {
    reference_set(center, grid, history, ReferenceMode::Neighborhood)
}

pub fn reference_set(
    center: PatchIndex,
    grid: GridShape,
    history: &[Tensor],
    mode: ReferenceMode,
) -> Result<ReferencePatchSet> {
    if !grid.contains(center) {
        return Err(Error::Config(format!(
            "patch ({}, {}) outside the {}x{} grid",
            center.grid_row, center.grid_col, grid.rows, grid.cols
        )));
    }
    if history.len() != grid.len() {
        return Err(Error::Dimension(format!("{} patch histories for a grid of {}", history.len(), grid.len())));
    }
    let indices: Vec<PatchIndex> = match mode {
        ReferenceMode::Neighborhood => std::iter::once(center)
            .chain(CLOCKWISE.iter().map(|&(dr, dc)| {
                let r = center.grid_row as isize + dr;
                let c = center.grid_col as isize + dc;
                if r < 0 || c < 0 || r as usize >= grid.rows || c as usize >= grid.cols {
                    center
                } else {
                    grid.index(r as usize, c as usize)
                }
            }))
            .collect(),
        ReferenceMode::FullGrid => grid.iter().collect(),
    };
    let parts: Vec<Tensor> = indices.iter().map(|i| history[i.linear_id].clone()).collect();
    Ok(ReferencePatchSet { patches: Tensor::stack(&parts)?, indices })
}

/// Reassembles per-patch `M x p x p` tiles into `M x H x W`.
pub fn stitch(tiles: &[(PatchIndex, Tensor)], grid: GridShape) -> Result<Tensor> {
    let mut slots: Vec<Option<&Tensor>> = vec![None; grid.len()];
    let mut shape: Option<&[usize]> = None;
    for (idx, t) in tiles {
        if !grid.contains(*idx) {
            return Err(Error::Aggregation { row: idx.grid_row, col: idx.grid_col, msg: "outside grid".into() });
        }
        match shape {
            None => shape = Some(t.shape()),
            Some(s) if s != t.shape() => {
                return Err(Error::Aggregation {
                    row: idx.grid_row,
                    col: idx.grid_col,
                    msg: format!("tile shape {:?} differs from {:?}", t.shape(), s),
                })
            }
            _ => {}
        }
        if slots[idx.linear_id].replace(t).is_some() {
            return Err(Error::Aggregation { row: idx.grid_row, col: idx.grid_col, msg: "duplicate tile".into() });
        }
    }
    if let Some(missing) = grid.iter().find(|i| slots[i.linear_id].is_none()) {
        return Err(Error::Aggregation { row: missing.grid_row, col: missing.grid_col, msg: "missing tile".into() });
    }
    let [m, p, q] = shape.expect("non-empty grid")[..] else {
        return Err(Error::Dimension("tiles must be M x p x p".into()));
    };
    if p != q {
        return Err(Error::Dimension(format!("tiles must be square, got {p}x{q}")));
    }
    let (h, w) = (grid.rows * p, grid.cols * p);
    let mut out = vec![0.0; m * h * w];
    for idx in grid.iter() {
        let tile = slots[idx.linear_id].unwrap().data();
        for t in 0..m {
            for r in 0..p {
                let dst = t * h * w + (idx.grid_row * p + r) * w + idx.grid_col * p;
                let src = t * p * p + r * p;
                out[dst..dst + p].copy_from_slice(&tile[src..src + p]);
            }
        }
    }
    Tensor::new(vec![m, h, w], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn histories(grid: GridShape, p: usize, n: usize) -> Vec<Tensor> {
        (0..grid.len()).map(|k| Tensor::full(&[p, p, n], k as f64)).collect()
    }

    #[test]
    fn sixteen_tiles() {
        let f = Tensor::from_fn(&[64, 64], |i| i as f64);
        let tiles = decompose(&f, 16).unwrap();
        assert_eq!(tiles.len(), 16);
        assert_eq!(tiles[5].0, PatchIndex { grid_row: 1, grid_col: 1, linear_id: 5 });
        assert_eq!(tiles[5].1.get(&[0, 0]), (16 * 64 + 16) as f64);
    }

    #[test]
    fn single_tile_is_identity() {
        let f = Tensor::from_fn(&[8, 8], |i| i as f64);
        let tiles = decompose(&f, 8).unwrap();
        assert_eq!(tiles.len(), 1);
        assert_eq!(tiles[0].1, f);
    }

    #[test]
    fn non_divisible() {
        assert!(matches!(decompose(&Tensor::zeros(&[10, 8]), 4), Err(Error::Config(_))));
    }

    #[test]
    fn centre_of_three_by_three() {
        let grid = GridShape { rows: 3, cols: 3 };
        let set = neighborhood(grid.index(1, 1), grid, &histories(grid, 2, 1)).unwrap();
        let mut ids: Vec<_> = set.indices.iter().map(|i| i.linear_id).collect();
        assert_eq!(ids, vec![4, 1, 2, 5, 8, 7, 6, 3, 0]);
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 9);
    }

    #[test]
    fn corner_replicates_five() {
        let grid = GridShape { rows: 4, cols: 4 };
        let set = neighborhood(grid.index(0, 0), grid, &histories(grid, 2, 3)).unwrap();
        assert_eq!(set.len(), 9);
        let replicas = set.indices[1..].iter().filter(|i| i.linear_id == 0).count();
        assert_eq!(replicas, 5);
        for k in 0..9 {
            if set.indices[k].linear_id == 0 {
                assert!(set.patches.index_axis0(k).data().iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn one_by_one_grid() {
        let grid = GridShape { rows: 1, cols: 1 };
        let set = neighborhood(grid.index(0, 0), grid, &histories(grid, 2, 2)).unwrap();
        assert!(set.indices.iter().all(|i| i.linear_id == 0));
    }

    #[test]
    fn full_grid_mode() {
        let grid = GridShape { rows: 4, cols: 4 };
        let set = reference_set(grid.index(2, 1), grid, &histories(grid, 2, 2), ReferenceMode::FullGrid).unwrap();
        assert_eq!(set.len(), 16);
        assert!(set.indices.iter().all(|i| i.linear_id < 16));
    }

    #[test]
    fn dropped_tile_is_named() {
        let f = Tensor::from_fn(&[3, 8, 8], |i| i as f64);
        let (grid, _) = patch_histories(&f, 4).unwrap();
        let mut tiles: Vec<_> = (0..4)
            .map(|k| (grid.index(k / 2, k % 2), Tensor::zeros(&[3, 4, 4])))
            .collect();
        tiles.remove(2);
        match stitch(&tiles, grid) {
            Err(Error::Aggregation { row: 1, col: 0, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        tiles.push((grid.index(0, 0), Tensor::zeros(&[3, 4, 4])));
        assert!(matches!(stitch(&tiles, grid), Err(Error::Aggregation { row: 0, col: 0, .. })));
    }

    #[test]
    fn steps_layout_round_trip() {
        let x = Tensor::from_fn(&[3, 4, 5], |i| i as f64);
        let hws = to_steps_last(&x);
        assert_eq!(hws.shape(), &[4, 5, 3]);
        assert_eq!(time_slice(&hws, 2), x.index_axis0(2));
        assert_eq!(to_frames_first(&hws), x);
    }

    proptest! {
        #[test]
        fn stitch_inverts_decompose(rows in 1usize..4, cols in 1usize..4, p in 1usize..6, m in 1usize..3, seed in any::<u64>()) {
            let frames = Tensor::from_fn(&[m, rows * p, cols * p], |i| f64::from_bits(seed ^ (i as u64) << 7) .sin());
            let (grid, tiles) = patch_histories(&frames, p).unwrap();
            let tiles: Vec<_> = grid.iter().map(|i| (i, to_frames_first(&tiles[i.linear_id]))).collect();
            let back = stitch(&tiles, grid).unwrap();
            let exact = back.data().iter().zip(frames.data()).all(|(a, b)| a.to_bits() == b.to_bits());
            prop_assert!(exact);
        }
    }
}
