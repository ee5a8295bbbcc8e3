//! Shared inputs for the criterion benchmarks in `benches/`.

use udenoise_core::channels::ChannelModel;
use udenoise_core::rng::SeedStream;

/// `n` outputs of a two-point source {0.25, 0.75} through AWGN.
pub fn two_point_outputs(n: usize, sigma: f64, seed: u64) -> (ChannelModel, Vec<f64>) {
    let channel = ChannelModel::awgn(sigma, 0.0, 1.0).expect("valid channel");
    let mut rng = SeedStream::new(seed).rng(0);
    let y = (0..n)
        .map(|i| {
            let x = if i % 2 == 0 { 0.25 } else { 0.75 };
            channel.sample(x, &mut rng).expect("input in range")
        })
        .collect();
    (channel, y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_is_reproducible() {
        let (_, a) = two_point_outputs(100, 0.1, 1);
        let (_, b) = two_point_outputs(100, 0.1, 1);
        assert_eq!(a, b);
        assert_eq!(a.len(), 100);
    }
}
