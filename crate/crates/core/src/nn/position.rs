/// Sinusoidal position features, `[positions, hidden]` row-major: channel
/// `2i` holds `sin(pos / 10000^(2i/hidden))`, channel `2i+1` the cosine.
pub fn fourier_position_encoding(positions: usize, hidden: usize) -> Vec<f64> {
    let mut out = vec![0.0; positions * hidden];
    for pos in 0..positions {
        for c in 0..hidden {
            let i = (c / 2) as f64;
            let freq = 10000f64.powf(-2.0 * i / hidden as f64);
            let angle = pos as f64 * freq;
            out[pos * hidden + c] = if c % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn position_zero_channels() {
        let pe = fourier_position_encoding(3, 6);
        for c in 0..6 {
            assert_eq!(pe[c], if c % 2 == 0 { 0.0 } else { 1.0 });
        }
    }

    #[test]
    fn positions_are_distinct() {
        let (n, h) = (4096, 16);
        let pe = fourier_position_encoding(n, h);
        let mut rows: Vec<&[f64]> = pe.chunks(h).collect();
        rows.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(rows.windows(2).all(|w| w[0] != w[1]));
    }
}
