//! Binary morphology with the square (Chebyshev-ball) structuring element of
//! half-width `radius`. Pixels outside the canvas count as background.

use crate::error::{Error, Result};
use crate::image::LabelMask;

fn require_binary(mask: &LabelMask) -> Result<()> {
    if mask.is_binary() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "morphology needs a binary mask, got {} classes",
            mask.num_classes()
        )))
    }
}

/// Swaps foreground and background.
pub fn complement(mask: &LabelMask) -> Result<LabelMask> {
    require_binary(mask)?;
    let mut out = mask.clone();
    for c in out.classes_mut() {
        *c = 1 - *c;
    }
    Ok(out)
}

/// Sliding-window OR along one axis; `border` fills positions off the canvas.
fn window_or(src: &[u8], len: usize, stride: usize, radius: usize, border: bool, dst: &mut [u8]) {
    for i in 0..len {
        let lo = i.saturating_sub(radius);
        let hi = (i + radius).min(len - 1);
        let clipped = i < radius || i + radius > len - 1;
        let hit = (border && clipped) || (lo..=hi).any(|j| src[j * stride] == 1);
        dst[i * stride] = hit as u8;
    }
}

/// Square dilation computed as a row pass then a column pass.
pub(crate) fn dilate_with_border(mask: &LabelMask, radius: usize, border: bool) -> LabelMask {
    if radius == 0 {
        return mask.clone();
    }
    let (h, w) = (mask.height(), mask.width());
    let src = mask.classes();
    let mut rows = vec![0u8; src.len()];
    for y in 0..h {
        window_or(&src[y * w..], w, 1, radius, border, &mut rows[y * w..]);
    }
    let mut out = mask.clone();
    let dst = out.classes_mut();
    for x in 0..w {
        window_or(&rows[x..], h, w, radius, border, &mut dst[x..]);
    }
    out
}

/// Grows the foreground by `radius` pixels in the Chebyshev metric.
pub fn dilate(mask: &LabelMask, radius: usize) -> Result<LabelMask> {
    require_binary(mask)?;
    Ok(dilate_with_border(mask, radius, false))
}

/// Shrinks the foreground: a pixel survives only if the whole square of
/// half-width `radius` around it lies on foreground inside the canvas.
pub fn erode(mask: &LabelMask, radius: usize) -> Result<LabelMask> {
    require_binary(mask)?;
    // the complement's off-canvas region is foreground
    let grown = dilate_with_border(&complement(mask)?, radius, true);
    complement(&grown)
}

/// Foreground pixels with at least one background 8-neighbour (or on the
/// canvas edge).
pub fn inner_boundary(mask: &LabelMask) -> Result<LabelMask> {
    let eroded = erode(mask, 1)?;
    let mut out = mask.clone();
    for (o, &e) in out.classes_mut().iter_mut().zip(eroded.classes()) {
        *o &= 1 - e;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn from_rows(rows: &[&str]) -> LabelMask {
        LabelMask::from_fn(rows.len(), rows[0].len(), |y, x| rows[y].as_bytes()[x] == b'#')
    }

    #[test]
    fn single_pixel_dilates_to_square() {
        let m = from_rows(&["...", ".#.", "..."]);
        assert_eq!(dilate(&m, 1).unwrap(), from_rows(&["###", "###", "###"]));
        assert_eq!(dilate(&m, 0).unwrap(), m);
    }

    #[test]
    fn full_canvas_erodes_to_center() {
        let m = from_rows(&["###", "###", "###"]);
        assert_eq!(erode(&m, 1).unwrap(), from_rows(&["...", ".#.", "..."]));
        assert_eq!(erode(&m, 0).unwrap(), m);
    }

    #[test]
    fn multiclass_rejected() {
        let m = LabelMask::new(2, 2, 3, vec![0, 1, 2, 0]).unwrap();
        assert!(dilate(&m, 1).is_err());
        assert!(erode(&m, 1).is_err());
    }

    #[test]
    fn boundary_of_square() {
        let m = from_rows(&[".....", ".###.", ".###.", ".###.", "....."]);
        assert_eq!(inner_boundary(&m).unwrap(), from_rows(&[".....", ".###.", ".#.#.", ".###.", "....."]));
    }
}
