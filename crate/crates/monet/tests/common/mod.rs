//! Shared fixtures for the integration tests.

use monet::dataset::{Country, QuarterStamp};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Synthetic quarterly CSV with a log-linear money/output relationship plus
/// noise, rich enough for the full pipeline to run end to end.
pub fn synthetic_quarterly_csv(
    country: Country,
    range: (QuarterStamp, QuarterStamp),
    seed: u64,
) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.03).unwrap();
    let mut out = String::from("date,country,m1,ngdp,gold_usd\n");
    let mut stamp = range.0;
    let mut t = 0.0f64;
    loop {
        let log_ngdp = 400f64.ln() + 0.012 * t + noise.sample(&mut rng);
        let log_gold =
            35f64.ln() + 0.008 * t + 0.3 * (t / 9.0).sin() + noise.sample(&mut rng);
        let log_m1 =
            -1.2 + 0.95 * log_ngdp + 0.15 * (log_gold - 3.5) + noise.sample(&mut rng);
        out.push_str(&format!(
            "{},{country},{},{},{}\n",
            stamp.iso_date(),
            log_m1.exp(),
            log_ngdp.exp(),
            log_gold.exp()
        ));
        if stamp == range.1 {
            break;
        }
        stamp = stamp.next();
        t += 1.0;
    }
    out
}
