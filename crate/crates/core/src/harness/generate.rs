//! Ground-truthed synthetic questions, one generator per task category.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::{json, Value};

use super::{BenchQuestion, Category, Provenance, SeriesSource};
use crate::oversight::TemplateSchema;

pub const ORDINALS: [&str; 4] = ["first", "second", "third", "fourth"];
pub const THIRDS: [&str; 3] = ["beginning", "middle", "end"];

/// Hours in the month-long solar series.
pub const SOLAR_LENGTH: usize = 744;
pub const SOLAR_NAMES: [&str; 2] = ["Solar panel 1", "Solar panel 2"];

pub const CLOUDY_QUESTION: &str = "You are a time series analysis expert. The time series represents hourly solar output from a panel over a month, influenced by a period of cloudy weather. Please analyze the time series features and answer the following questions:\n\nHow does the duration of cloudy periods within the month compare between the first and second time series?\n\nPlease strictly follow the output format as:\n\n|the first time series has cloudy periods for the (select all that apply from first, second, third, fourth) week, whereas the second time series are cloudy for the (select all that apply from first, second, third, fourth) week.|\n\nThen briefly explain your answer.";

/// Label of the third of `0..len` containing `pos`.
pub fn third_of(pos: usize, len: usize) -> &'static str {
    THIRDS[(3 * pos / len).min(2)]
}

/// Per-question seed derived from the run seed, category and position.
pub fn question_seed(seed: u64, category: Category, i: usize) -> u64 {
    let mut z = seed
        .wrapping_add((category.index() as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add((i as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// What a generator produces for one question.
pub struct Instance {
    pub question: String,
    pub series: Vec<(String, Vec<f64>)>,
    pub options: Option<Vec<String>>,
    pub answer: String,
    pub params: Value,
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize, sd: f64) -> Vec<f64> {
    let d = Normal::new(0.0, sd).expect("finite sd");
    (0..n).map(|_| d.sample(rng)).collect()
}

fn ar1(rng: &mut ChaCha8Rng, n: usize, phi: f64) -> Vec<f64> {
    let e = gaussian(rng, n, 1.0);
    let mut x = vec![0.0; n];
    for t in 0..n {
        x[t] = e[t] + if t > 0 { phi * x[t - 1] } else { 0.0 };
    }
    x
}

/// Build one question of `category` from its per-question seed.
pub fn instance(category: Category, qseed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(qseed);
    match category {
        Category::Trend => trend(&mut rng),
        Category::Seasonality => seasonality(&mut rng),
        Category::AnomalyLocation => anomaly(&mut rng),
        Category::Stationarity => stationarity(&mut rng),
        Category::Noise => noise(&mut rng),
        Category::SimilarityChoice => similarity(&mut rng),
        Category::LaggedCorrelation => lagged(&mut rng),
        Category::GrangerDirection => granger(&mut rng),
        Category::TwoSeriesCloudyWeek => {
            let weeks = [cloudy_weeks(&mut rng), cloudy_weeks(&mut rng)];
            cloudy(&mut rng, weeks)
        }
    }
}

fn trend(rng: &mut ChaCha8Rng) -> Instance {
    let n = 100;
    let direction = ["up", "down", "flat"][rng.random_range(0..3)];
    let magnitude = rng.random_range(0.04..0.1);
    let slope = match direction {
        "up" => magnitude,
        "down" => -magnitude,
        _ => 0.0,
    };
    let level = rng.random_range(-5.0..5.0);
    let e = gaussian(rng, n, 1.0);
    let values = (0..n).map(|t| level + slope * t as f64 + e[t]).collect();
    Instance {
        question: "Is the trend of series 'series' upward, downward or flat?".into(),
        series: vec![("series".into(), values)],
        options: None,
        answer: direction.into(),
        params: json!({"length": n, "slope": slope, "level": level, "noise_sd": 1.0}),
    }
}

fn seasonality(rng: &mut ChaCha8Rng) -> Instance {
    let period = rng.random_range(6..=24usize);
    let cycles = rng.random_range(6..=10usize);
    let n = period * cycles;
    let amplitude = rng.random_range(1.5..3.0);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let e = gaussian(rng, n, 0.3);
    let values = (0..n)
        .map(|t| amplitude * (std::f64::consts::TAU * t as f64 / period as f64 + phase).sin() + e[t])
        .collect();
    Instance {
        question: "What is the period, in samples, of the seasonal cycle in series 'series'?".into(),
        series: vec![("series".into(), values)],
        options: None,
        answer: period.to_string(),
        params: json!({"length": n, "period": period, "amplitude": amplitude, "phase": phase, "noise_sd": 0.3}),
    }
}

fn anomaly(rng: &mut ChaCha8Rng) -> Instance {
    let n = 120;
    let position = rng.random_range(5..n - 5);
    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let size = sign * rng.random_range(2.5..4.0);
    let period = rng.random_range(15.0..30.0);
    let e = gaussian(rng, n, 0.2);
    let mut values: Vec<f64> = (0..n)
        .map(|t| (std::f64::consts::TAU * t as f64 / period).sin() + e[t])
        .collect();
    values[position] += size;
    let options: Vec<String> = THIRDS.iter().map(|s| s.to_string()).collect();
    Instance {
        question: "In which part of the time series 'series' does the anomaly occur? Options: beginning, middle, end"
            .into(),
        series: vec![("series".into(), values)],
        options: Some(options),
        answer: third_of(position, n).into(),
        params: json!({"length": n, "position": position, "size": size, "period": period, "noise_sd": 0.2}),
    }
}

fn stationarity(rng: &mut ChaCha8Rng) -> Instance {
    let n = 200;
    let walk = rng.random_bool(0.5);
    let e = gaussian(rng, n, 1.0);
    let values = if walk {
        e.iter()
            .scan(0.0, |s, x| {
                *s += x;
                Some(*s)
            })
            .collect()
    } else {
        e
    };
    Instance {
        question: "Is series 'series' stationary or nonstationary?".into(),
        series: vec![("series".into(), values)],
        options: None,
        answer: if walk { "nonstationary" } else { "stationary" }.into(),
        params: json!({"length": n, "process": if walk { "random_walk" } else { "white_noise" }}),
    }
}

fn noise(rng: &mut ChaCha8Rng) -> Instance {
    let n = 200;
    let red = rng.random_bool(0.5);
    let phi = if red { 0.8 } else { 0.0 };
    let values = ar1(rng, n, phi);
    Instance {
        question: "Is the noise in series 'series' white noise or red noise?".into(),
        series: vec![("series".into(), values)],
        options: None,
        answer: if red { "red" } else { "white" }.into(),
        params: json!({"length": n, "phi": phi}),
    }
}

fn shape(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Value) {
    let f1 = rng.random_range(0.5..3.0);
    let f2 = rng.random_range(3.0..6.0);
    let p1 = rng.random_range(0.0..std::f64::consts::TAU);
    let p2 = rng.random_range(0.0..std::f64::consts::TAU);
    let w = rng.random_range(0.2..0.6);
    let x = (0..n)
        .map(|t| {
            let u = std::f64::consts::TAU * t as f64 / n as f64;
            (f1 * u + p1).sin() + w * (f2 * u + p2).sin()
        })
        .collect();
    (x, json!({"f1": f1, "f2": f2, "p1": p1, "p2": p2, "w": w}))
}

fn similarity(rng: &mut ChaCha8Rng) -> Instance {
    let n = 60;
    let names = ["A", "B", "C"];
    let (reference, ref_params) = shape(rng, n);
    let target = rng.random_range(0..3);
    let mut series = vec![("reference".to_string(), reference.clone())];
    let mut shapes = Vec::new();
    for (i, name) in names.iter().enumerate() {
        let scale = rng.random_range(0.5..3.0);
        let offset = rng.random_range(-5.0..5.0);
        let e = gaussian(rng, n, SOLAR_NOISE_SD);
        let (base, p) = if i == target {
            (reference.clone(), ref_params.clone())
        } else {
            shape(rng, n)
        };
        shapes.push(p);
        series.push((
            name.to_string(),
            base.iter().zip(&e).map(|(b, e)| offset + scale * (b + e)).collect(),
        ));
    }
    Instance {
        question: "Which series is most similar in shape to series 'reference'? Options: A, B, C".into(),
        series,
        options: Some(names.iter().map(|s| s.to_string()).collect()),
        answer: names[target].into(),
        params: json!({"length": n, "target": names[target], "reference": ref_params, "candidates": shapes}),
    }
}

fn driver_follower(
    rng: &mut ChaCha8Rng,
    n: usize,
    follower: impl Fn(&[f64], &[f64]) -> Vec<f64>,
) -> (Vec<f64>, Vec<f64>, bool) {
    let x_leads = rng.random_bool(0.5);
    let driver = ar1(rng, n, 0.5);
    let e = gaussian(rng, n, 1.0);
    let f = follower(&driver, &e);
    if x_leads {
        (driver, f, true)
    } else {
        (f, driver, false)
    }
}

fn lagged(rng: &mut ChaCha8Rng) -> Instance {
    let n = 200;
    let lag = rng.random_range(1..=5usize);
    let (x, y, x_leads) = driver_follower(rng, n, |d, e| {
        (0..d.len())
            .map(|t| if t >= lag { d[t - lag] } else { 0.0 } + 0.3 * e[t])
            .collect()
    });
    Instance {
        question: "Does series 'x' lead series 'y'?".into(),
        series: vec![("x".into(), x), ("y".into(), y)],
        options: None,
        answer: if x_leads { "yes" } else { "no" }.into(),
        params: json!({"length": n, "lag": lag, "driver": if x_leads { "x" } else { "y" }}),
    }
}

fn granger(rng: &mut ChaCha8Rng) -> Instance {
    let n = 200;
    let (x, y, x_causes) = driver_follower(rng, n, |d, e| {
        let mut f = vec![0.0; d.len()];
        for t in 0..d.len() {
            f[t] = e[t] + if t > 0 { 0.4 * f[t - 1] + 0.7 * d[t - 1] } else { 0.0 };
        }
        f
    });
    Instance {
        question: "Does series 'x' Granger-cause series 'y'?".into(),
        series: vec![("x".into(), x), ("y".into(), y)],
        options: None,
        answer: if x_causes { "yes" } else { "no" }.into(),
        params: json!({"length": n, "driver": if x_causes { "x" } else { "y" }, "ar": 0.4, "coupling": 0.7}),
    }
}

fn cloudy_weeks(rng: &mut ChaCha8Rng) -> Vec<usize> {
    let count = if rng.random_bool(0.7) { 1 } else { 2 };
    let mut weeks: Vec<usize> = (0..4).collect();
    for i in 0..count {
        let j = rng.random_range(i..4);
        weeks.swap(i, j);
    }
    let mut picked = weeks[..count].to_vec();
    picked.sort_unstable();
    picked
}

/// Daylight measurement noise of the solar series.
pub const SOLAR_NOISE_SD: f64 = 0.1;

/// Hourly solar output: a clipped daily cycle peaking at noon plus daylight
/// noise, with every listed week (a quarter of the month) scaled by `depth`.
pub fn solar_series(rng: &mut ChaCha8Rng, weeks: &[usize], depth: f64) -> Vec<f64> {
    let n = SOLAR_LENGTH;
    let week = n / 4;
    let peak = rng.random_range(4.0..6.0);
    let e = gaussian(rng, n, SOLAR_NOISE_SD);
    (0..n)
        .map(|t| {
            let hour = (t % 24) as f64;
            let sun = (std::f64::consts::PI * (hour - 6.0) / 12.0).sin().max(0.0);
            let cloud = if weeks.contains(&(t / week).min(3)) { depth } else { 1.0 };
            if sun > 0.0 {
                (peak * sun * cloud + e[t]).max(0.0)
            } else {
                0.0
            }
        })
        .collect()
}

/// Ground-truth answer for the cloudy-week template.
pub fn cloudy_answer(weeks: &[Vec<usize>; 2]) -> String {
    let template = TemplateSchema::extract(CLOUDY_QUESTION)
        .and_then(|t| TemplateSchema::parse(&t))
        .expect("shipped question carries a valid template");
    let picks: Vec<Vec<String>> = weeks
        .iter()
        .map(|w| w.iter().map(|&i| ORDINALS[i].to_string()).collect())
        .collect();
    template.fill(&picks)
}

/// The two-panel cloudy-week question for given depressed weeks.
pub fn cloudy(rng: &mut ChaCha8Rng, weeks: [Vec<usize>; 2]) -> Instance {
    let depth = [rng.random_range(0.3..0.6), rng.random_range(0.3..0.6)];
    let series = SOLAR_NAMES
        .iter()
        .zip(&weeks)
        .zip(depth)
        .map(|((name, w), d)| (name.to_string(), solar_series(rng, w, d)))
        .collect();
    Instance {
        question: CLOUDY_QUESTION.into(),
        series,
        options: None,
        answer: cloudy_answer(&weeks),
        params: json!({"length": SOLAR_LENGTH, "cloudy_weeks": weeks, "depth": depth}),
    }
}

/// `count` questions of one category, deterministic in `seed`.
pub fn generate_synthetic(category: Category, count: usize, seed: u64) -> Vec<BenchQuestion> {
    (0..count)
        .map(|i| {
            let qseed = question_seed(seed, category, i);
            let inst = instance(category, qseed);
            BenchQuestion {
                id: format!("{}-{seed}-{i:04}", category.name()),
                category,
                question: inst.question,
                series: inst
                    .series
                    .into_iter()
                    .map(|(name, values)| SeriesSource::Inline { name, values })
                    .collect(),
                options: inst.options,
                answer: inst.answer,
                provenance: Provenance::Synthetic {
                    seed: qseed,
                    params: inst.params,
                },
            }
        })
        .collect()
}

/// Re-instantiate a synthetic question's series from its recorded seed.
pub fn regenerate(q: &BenchQuestion) -> Option<Vec<SeriesSource>> {
    match &q.provenance {
        Provenance::Synthetic { seed, .. } => Some(
            instance(q.category, *seed)
                .series
                .into_iter()
                .map(|(name, values)| SeriesSource::Inline { name, values })
                .collect(),
        ),
        Provenance::External { .. } => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thirds_boundaries() {
        assert_eq!(third_of(0, 744), "beginning");
        assert_eq!(third_of(247, 744), "beginning");
        assert_eq!(third_of(248, 744), "middle");
        assert_eq!(third_of(388, 744), "middle");
        assert_eq!(third_of(496, 744), "end");
        assert_eq!(third_of(743, 744), "end");
    }

    #[test]
    fn generation_is_deterministic_and_faithful() {
        for c in Category::ALL {
            let a = generate_synthetic(c, 3, 11);
            let b = generate_synthetic(c, 3, 11);
            assert_eq!(a, b);
            for q in &a {
                assert_eq!(regenerate(q).unwrap(), q.series, "{}", q.id);
                if let Some(opts) = &q.options {
                    assert!(opts.contains(&q.answer));
                }
            }
        }
        assert_ne!(
            generate_synthetic(Category::Trend, 1, 1),
            generate_synthetic(Category::Trend, 1, 2)
        );
    }

    #[test]
    fn anomaly_answer_matches_injected_position() {
        for q in generate_synthetic(Category::AnomalyLocation, 20, 3) {
            let Provenance::Synthetic { params, .. } = &q.provenance else {
                unreachable!()
            };
            let pos = params["position"].as_u64().unwrap() as f64;
            let label = if pos < 40.0 {
                "beginning"
            } else if pos < 80.0 {
                "middle"
            } else {
                "end"
            };
            assert_eq!(q.answer, label);
        }
    }

    #[test]
    fn cloudy_answer_uses_template() {
        assert_eq!(
            cloudy_answer(&[vec![1], vec![1, 3]]),
            "the first time series has cloudy periods for the second week, whereas the second time series are cloudy for the second and fourth week."
        );
    }

    #[test]
    fn granger_direction_flips_answer() {
        let qs = generate_synthetic(Category::GrangerDirection, 30, 5);
        assert!(qs.iter().any(|q| q.answer == "yes"));
        assert!(qs.iter().any(|q| q.answer == "no"));
        for q in qs {
            let Provenance::Synthetic { params, .. } = &q.provenance else {
                unreachable!()
            };
            assert_eq!(q.answer == "yes", params["driver"] == "x");
        }
    }
}
