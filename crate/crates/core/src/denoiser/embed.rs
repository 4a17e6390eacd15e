use crate::numeric::Tensor;

/// Sinusoidal embedding of the diffusion step as a `1 x d` row.
pub fn timestep_embedding(t: usize, d: usize) -> Tensor {
    let mut row = vec![0.0; d];
    for i in 0..d / 2 {
        let angle = t as f64 / 10000f64.powf((2 * i) as f64 / d as f64);
        row[2 * i] = angle.sin();
        row[2 * i + 1] = angle.cos();
    }
    Tensor::new(vec![1, d], row).unwrap()
}

/// Fixed 2-D sinusoidal code of each token's pixel coordinates inside its patch.
///
/// Rows follow `r * side + c`; the first half of the channels encodes the row
/// coordinate, the second half the column, both measured at the token centre
/// so target and reference grids of different resolution share one frame.
pub fn coordinate_embedding(side: usize, cell_pixels: f64, d: usize) -> Tensor {
    let quarter = d / 4;
    let mut data = Vec::with_capacity(side * side * d);
    for r in 0..side {
        for c in 0..side {
            let y = (r as f64 + 0.5) * cell_pixels;
            let x = (c as f64 + 0.5) * cell_pixels;
            for coord in [y, x] {
                for i in 0..quarter {
                    let w = 1.0 / 64f64.powf(i as f64 / quarter as f64);
                    data.push((coord * w).sin());
                    data.push((coord * w).cos());
                }
            }
            data.resize(data.len() + (d - 4 * quarter), 0.0);
        }
    }
    Tensor::new(vec![side * side, d], data).unwrap()
}
