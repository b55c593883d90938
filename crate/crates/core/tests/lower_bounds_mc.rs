use nalgebra::DVector;
use quadfun_core::lower_bounds::{bayes_testing_risk_bound, chi2_cross, hypergeometric_mgf_bound, prior_sigma};
use quadfun_core::seeded_rng;
use rand::Rng;
use rand_distr::StandardNormal;

fn normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

fn supports(p: usize, s: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, p: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if left == 0 {
            out.push(cur.clone());
            return;
        }
        for j in start..=p - left {
            cur.push(j);
            rec(j + 1, p, left - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, p, s, &mut Vec::new(), &mut out);
    out
}

struct TwoPoint {
    p: usize,
    s: usize,
    total: usize,
    tau: f64,
    supports: Vec<Vec<usize>>,
}

impl TwoPoint {
    fn new(p: usize, s: usize, total: usize, tau: f64) -> Self {
        Self {
            p,
            s,
            total,
            tau,
            supports: supports(p, s),
        }
    }

    fn draw<R: Rng>(&self, alternative: bool, rng: &mut R) -> (Vec<Vec<f64>>, Vec<f64>) {
        let sigma = if alternative { prior_sigma(self.tau) } else { 1.0 };
        let support = &self.supports[rng.random_range(0..self.supports.len())];
        let value = self.tau / (self.s as f64).sqrt();
        let mut xs = Vec::with_capacity(self.total);
        let mut ys = Vec::with_capacity(self.total);
        for _ in 0..self.total {
            let x: Vec<f64> = (0..self.p).map(|_| normal(rng)).collect();
            let mean = if alternative {
                support.iter().map(|&j| x[j]).sum::<f64>() * value
            } else {
                0.0
            };
            ys.push(mean + sigma * normal(rng));
            xs.push(x);
        }
        (xs, ys)
    }

    // log of the prior-averaged likelihood ratio against the null
    fn log_ratio(&self, xs: &[Vec<f64>], ys: &[f64]) -> f64 {
        let var = 1.0 - self.tau * self.tau;
        let value = self.tau / (self.s as f64).sqrt();
        let logs: Vec<f64> = self
            .supports
            .iter()
            .map(|support| {
                xs.iter()
                    .zip(ys)
                    .map(|(x, &y)| {
                        let r = y - support.iter().map(|&j| x[j]).sum::<f64>() * value;
                        -0.5 * var.ln() - r * r / (2.0 * var) + y * y / 2.0
                    })
                    .sum::<f64>()
            })
            .collect();
        let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        top + (logs.iter().map(|l| (l - top).exp()).sum::<f64>() / logs.len() as f64).ln()
    }
}

#[test]
fn likelihood_ratio_test_respects_bayes_bound() {
    let (p, s, total) = (6, 2, 20);
    let tau = (0.3 / total as f64).sqrt();
    let bound = bayes_testing_risk_bound(p, s, total, tau).unwrap();
    assert!(bound > 0.4 && bound < 0.6, "bound {bound}");
    let exp = TwoPoint::new(p, s, total, tau);
    let trials = 1000;
    let mut rng = seeded_rng(11);
    let type_one = (0..trials)
        .filter(|_| {
            let (x, y) = exp.draw(false, &mut rng);
            exp.log_ratio(&x, &y) >= 0.0
        })
        .count() as f64
        / trials as f64;
    let type_two = (0..trials)
        .filter(|_| {
            let (x, y) = exp.draw(true, &mut rng);
            exp.log_ratio(&x, &y) < 0.0
        })
        .count() as f64
        / trials as f64;
    let se = ((type_one * (1.0 - type_one) + type_two * (1.0 - type_two)) / trials as f64).sqrt();
    assert!(
        type_one + type_two >= bound - 3.0 * se,
        "errors {type_one} + {type_two} below bound {bound}"
    );
}

#[test]
fn strong_signal_is_separable() {
    let (p, s, total) = (6, 2, 20);
    let tau = 0.8;
    assert_eq!(bayes_testing_risk_bound(p, s, total, tau).unwrap(), 0.0);
    let exp = TwoPoint::new(p, s, total, tau);
    let mut rng = seeded_rng(12);
    let errors = (0..200)
        .filter(|i| {
            let alt = i % 2 == 1;
            let (x, y) = exp.draw(alt, &mut rng);
            (exp.log_ratio(&x, &y) >= 0.0) != alt
        })
        .count();
    assert!(errors <= 4, "{errors} errors");
}

#[test]
fn chi2_cross_matches_monte_carlo() {
    let tau: f64 = 0.5;
    let total = 3;
    let theta = DVector::from_vec(vec![tau, 0.0, 0.0]);
    let theta_prime = DVector::from_vec(vec![tau, tau, 0.0]) / 2f64.sqrt();
    let exact = chi2_cross(&theta, &theta_prime, total).unwrap();
    let var = 1.0 - tau * tau;
    let mut rng = seeded_rng(13);
    let reps = 200_000;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..reps {
        let mut log_l = 0.0;
        for _ in 0..total {
            let x: Vec<f64> = (0..3).map(|_| normal(&mut rng)).collect();
            let y = normal(&mut rng);
            for t in [&theta, &theta_prime] {
                let r = y - (0..3).map(|j| x[j] * t[j]).sum::<f64>();
                log_l += -0.5 * var.ln() - r * r / (2.0 * var) + y * y / 2.0;
            }
        }
        let v = log_l.exp();
        sum += v;
        sum_sq += v * v;
    }
    let mean = sum / reps as f64;
    let se = ((sum_sq / reps as f64 - mean * mean) / reps as f64).sqrt();
    assert!((mean - exact).abs() < 5.0 * se, "mc {mean} ± {se}, exact {exact}");
}

#[test]
fn prior_average_of_cross_term_is_below_mgf() {
    let (p, s, total) = (8, 3, 10);
    let tau = 0.2;
    let sups = supports(p, s);
    let value = tau / (s as f64).sqrt();
    let vec_of = |sup: &Vec<usize>| {
        let mut v = DVector::zeros(p);
        for &j in sup {
            v[j] = value;
        }
        v
    };
    let mut avg = 0.0;
    for a in &sups {
        for b in &sups {
            avg += chi2_cross(&vec_of(a), &vec_of(b), total).unwrap();
        }
    }
    avg /= (sups.len() * sups.len()) as f64;
    let mgf = hypergeometric_mgf_bound(p, s, total, tau).unwrap();
    assert!(avg > 1.0 && avg <= mgf, "{avg} vs {mgf}");
}
