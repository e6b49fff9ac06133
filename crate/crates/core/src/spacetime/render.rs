use super::{Result, SpacetimeError};

const STOPS: [(f64, [f64; 3]); 3] = [
    (0.0, [8.0, 29.0, 88.0]),
    (0.5, [65.0, 182.0, 196.0]),
    (1.0, [255.0, 255.0, 217.0]),
];
const MASKED: [u8; 3] = [128, 128, 128];

/// Piecewise-linear colour for `v` in `[0, 1]`, rounded half-up per channel.
pub fn colormap(v: f64) -> [u8; 3] {
    let (lo, hi) = if v <= STOPS[1].0 { (STOPS[0], STOPS[1]) } else { (STOPS[1], STOPS[2]) };
    let f = (v - lo.0) / (hi.0 - lo.0);
    let mut rgb = [0u8; 3];
    for (k, out) in rgb.iter_mut().enumerate() {
        let x = lo.1[k] + f * (hi.1[k] - lo.1[k]);
        *out = (x + 0.5).floor().clamp(0.0, 255.0) as u8;
    }
    rgb
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PpmImage {
    pub width: usize,
    pub height: usize,
    pub bytes: Vec<u8>,
}

/// One pixel per cell; masked cells are grey.
pub fn render_heatmap(values: &[f64], mask: &[f64], height: usize, width: usize) -> Result<PpmImage> {
    if values.len() != height * width || mask.len() != values.len() {
        return Err(SpacetimeError::Shape(format!(
            "{} values and {} mask cells for a {height}x{width} canvas",
            values.len(),
            mask.len()
        )));
    }
    let mut bytes = format!("P6\n{width} {height}\n255\n").into_bytes();
    bytes.reserve(values.len() * 3);
    for (index, (&v, &m)) in values.iter().zip(mask).enumerate() {
        if m == 0.0 {
            bytes.extend_from_slice(&MASKED);
            continue;
        }
        if !(0.0..=1.0).contains(&v) {
            return Err(SpacetimeError::OutOfRange { index, value: v });
        }
        bytes.extend_from_slice(&colormap(v));
    }
    Ok(PpmImage { width, height, bytes })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stops_and_midpoints() {
        assert_eq!(colormap(0.0), [8, 29, 88]);
        assert_eq!(colormap(0.5), [65, 182, 196]);
        assert_eq!(colormap(1.0), [255, 255, 217]);
        // (8+65)/2 = 36.5, (29+182)/2 = 105.5, (88+196)/2 = 142
        assert_eq!(colormap(0.25), [37, 106, 142]);
    }

    #[test]
    fn header_and_mask() {
        let img = render_heatmap(&[0.0, 1.0, 0.3, 0.9], &[1.0, 1.0, 0.0, 1.0], 2, 2).unwrap();
        let header = b"P6\n2 2\n255\n";
        assert_eq!(&img.bytes[..header.len()], header);
        assert_eq!(img.bytes.len(), header.len() + 12);
        assert_eq!(&img.bytes[header.len() + 6..header.len() + 9], &[128, 128, 128]);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(matches!(
            render_heatmap(&[1.5], &[1.0], 1, 1),
            Err(SpacetimeError::OutOfRange { index: 0, .. })
        ));
        // masked cells are never inspected
        assert!(render_heatmap(&[7.0], &[0.0], 1, 1).is_ok());
    }
}
