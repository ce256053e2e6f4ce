//! Writes the bundled two-day detector sample.
//!
//! Demand follows a daily curve with morning and afternoon peaks. While
//! traffic flows freely, each minute breaks down with the probability given
//! by a W(150, 6.5) capacity at the current 3-minute intensity; a breakdown
//! is followed by 20 to 50 minutes of queueing.
//!
//! ```text
//! cargo run -p stocap --example sample_events -- data/sample_events.csv
//! ```

use std::fs::File;
use std::io::{BufWriter, Write};

use chrono::{DateTime, Duration, Utc};
use stocap::capacity::WeibullParams;
use stocap::synthetic::UniformSource;

const SEED: u64 = 20160503;
const DAYS: i64 = 2;

/// Vehicles per minute at minute-of-day `m`.
fn demand(m: f64) -> f64 {
    let bump = |centre: f64, width: f64, height: f64| height * (-((m - centre) / width).powi(2)).exp();
    let base = 4.0 + 26.0 * (((m - 240.0) / 1440.0 * std::f64::consts::TAU).sin().max(0.0) * 0.7 + 0.3);
    base + bump(450.0, 80.0, 16.0) + bump(1020.0, 100.0, 18.0)
}

/// Sum of three uniforms, rescaled to roughly unit variance.
fn noise(rng: &mut UniformSource) -> f64 {
    (rng.next() + rng.next() + rng.next() - 1.5) * 2.0
}

fn main() -> std::io::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "data/sample_events.csv".into());
    let mut out = BufWriter::new(File::create(&path)?);
    writeln!(out, "timestamp,speed_kmh,length_m,valid")?;

    let capacity = WeibullParams::new(150.0, 6.5).expect("valid parameters");
    let mut rng = UniformSource::new(SEED);
    let start: DateTime<Utc> = "2016-05-03T00:00:00Z".parse().expect("timestamp");
    let mut recent = [0.0f64; 3];
    let mut queue_left = 0u32;
    // Free minutes after a queue dissolves before traffic can break down again.
    let mut cooldown = 0u32;
    let mut breakdowns = 0;
    let mut rows = 0usize;

    for minute in 0..DAYS * 1440 {
        let tod = (minute % 1440) as f64;
        let congested = queue_left > 0;
        let mut n = (demand(tod) + 2.5 * noise(&mut rng)).round().max(0.0) as u32;
        if congested {
            n = n.min(40);
        }
        let mean_speed = if congested { 22.0 + 8.0 * noise(&mut rng) } else { 102.0 + 3.0 * noise(&mut rng) };

        let mut pce = 0.0;
        for k in 0..n {
            let offset = (k as f64 + rng.next()) * 60.0 / n as f64;
            let t = start + Duration::minutes(minute) + Duration::milliseconds((offset * 1000.0) as i64);
            let truck = rng.next() < 0.12;
            let length = if truck { 12.0 + 6.0 * rng.next() } else { 3.8 + 1.4 * rng.next() };
            pce += if truck { 2.0 } else { 1.0 };
            let speed = (mean_speed + 6.0 * noise(&mut rng)).max(3.0);
            let valid = rng.next() >= 0.002;
            writeln!(
                out,
                "{},{:.1},{:.1},{}",
                t.format("%Y-%m-%dT%H:%M:%S%.3fZ"),
                speed,
                length,
                u8::from(valid)
            )?;
            rows += 1;
        }

        recent = [recent[1], recent[2], pce];
        if congested {
            queue_left -= 1;
            if queue_left == 0 {
                cooldown = 8;
            }
        } else if cooldown > 0 {
            cooldown -= 1;
        } else {
            let flow: f64 = recent.iter().sum();
            if rng.next() < capacity.cdf_at(flow) {
                queue_left = 20 + (rng.next() * 30.0) as u32;
                breakdowns += 1;
            }
        }
    }
    out.flush()?;
    eprintln!("{rows} events, {breakdowns} breakdowns written to {path}");
    Ok(())
}
