use crate::mapping::GridMapping;
use crate::{MappingError, Result};

/// Corner-aligned bilinear resampling of a coordinate grid to any size.
fn resample(map: &GridMapping, out_h: usize, out_w: usize) -> GridMapping {
    let (in_h, in_w) = (map.height(), map.width());
    let coords = map.coords();
    // Source position of output index i along an axis; corners map to
    // corners exactly.
    let src_pos = |i: usize, n_out: usize, n_in: usize| -> f64 {
        if n_out <= 1 {
            0.0
        } else {
            i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64
        }
    };
    GridMapping::from_fn(out_h, out_w, |u, v| {
        let sy = src_pos(u, out_h, in_h);
        let sx = src_pos(v, out_w, in_w);
        let y0 = (sy.floor() as usize).min(in_h - 1);
        let x0 = (sx.floor() as usize).min(in_w - 1);
        let y1 = (y0 + 1).min(in_h - 1);
        let x1 = (x0 + 1).min(in_w - 1);
        let fy = sy - y0 as f64;
        let fx = sx - x0 as f64;
        let lerp = |c: usize| -> f64 {
            let top = coords[[y0, x0, c]] * (1.0 - fx) + coords[[y0, x1, c]] * fx;
            let bot = coords[[y1, x0, c]] * (1.0 - fx) + coords[[y1, x1, c]] * fx;
            top * (1.0 - fy) + bot * fy
        };
        (lerp(0), lerp(1))
    })
}

/// Upsamples a mapping to a larger grid by corner-aligned bilinear
/// interpolation; corners are preserved exactly. Shrinking either axis is
/// an error — use [`downsample_mapping`].
pub fn upsample_mapping(map: &GridMapping, out_h: usize, out_w: usize) -> Result<GridMapping> {
    if out_h < map.height() || out_w < map.width() {
        return Err(MappingError::InvalidArgument(format!(
            "upsample target {out_h}x{out_w} is smaller than source {}x{}; use downsample_mapping",
            map.height(),
            map.width()
        )));
    }
    Ok(resample(map, out_h, out_w))
}

/// Downsamples a mapping to a smaller grid by corner-aligned bilinear
/// sampling (adequate for the smooth fields mappings represent). Growing
/// either axis is an error — use [`upsample_mapping`].
pub fn downsample_mapping(map: &GridMapping, out_h: usize, out_w: usize) -> Result<GridMapping> {
    if out_h == 0 || out_w == 0 {
        return Err(MappingError::InvalidArgument(
            "downsample target must be nonzero".into(),
        ));
    }
    if out_h > map.height() || out_w > map.width() {
        return Err(MappingError::InvalidArgument(format!(
            "downsample target {out_h}x{out_w} is larger than source {}x{}; use upsample_mapping",
            map.height(),
            map.width()
        )));
    }
    Ok(resample(map, out_h, out_w))
}
