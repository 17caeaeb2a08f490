//! Non-overlapping patch sequences. Patch `n = r * (W/P) + c` holds the
//! `P x P x C` block at grid cell `(r, c)` flattened in `(row, col, channel)`
//! order. Both directions are differentiable.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn num_patches(height: usize, width: usize, patch: usize) -> usize {
    (height / patch) * (width / patch)
}

fn check(op: &'static str, h: usize, w: usize, p: usize) -> Result<()> {
    if p == 0 || !h.is_multiple_of(p) || !w.is_multiple_of(p) {
        return Err(Error::shape(op, format!("{h}x{w} not divisible by patch size {p}")));
    }
    Ok(())
}

/// `[C, H, W] -> [N, P*P*C]`.
pub fn patchify(img: &Tensor, patch: usize) -> Result<Tensor> {
    let &[c, h, w] = img.shape() else {
        return Err(Error::shape("patchify", format!("expected [C, H, W], got {:?}", img.shape())));
    };
    check("patchify", h, w, patch)?;
    let (gh, gw) = (h / patch, w / patch);
    img.reshape(&[c, gh, patch, gw, patch])?
        .permute(&[1, 3, 2, 4, 0])?
        .reshape(&[gh * gw, patch * patch * c])
}

/// `[N, P*P*C] -> [C, H, W]`.
pub fn unpatchify(seq: &Tensor, channels: usize, height: usize, width: usize, patch: usize) -> Result<Tensor> {
    check("unpatchify", height, width, patch)?;
    let (gh, gw) = (height / patch, width / patch);
    if seq.shape() != [gh * gw, patch * patch * channels] {
        return Err(Error::Dimension {
            op: "unpatchify",
            lhs: seq.shape().to_vec(),
            rhs: vec![gh * gw, patch * patch * channels],
        });
    }
    seq.reshape(&[gh, gw, patch, patch, channels])?
        .permute(&[4, 0, 2, 1, 3])?
        .reshape(&[channels, height, width])
}
