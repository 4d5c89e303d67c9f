use ginnlp::network::LOG_CLAMP;
use ginnlp::NetworkParams;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
struct Case {
    nvars: usize,
    blocks: Vec<Vec<f64>>,
    c: Vec<f64>,
    bias: f64,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
}

impl Case {
    fn params(&self) -> NetworkParams {
        NetworkParams::from_parts(self.blocks.clone(), self.c.clone(), self.bias, self.nvars)
            .unwrap()
    }
}

fn arb_case(weight: f64, max_blocks: usize) -> impl Strategy<Value = Case> {
    (1usize..=4, 1usize..=max_blocks, 1usize..=12).prop_flat_map(move |(nvars, nblocks, rows)| {
        (
            prop::collection::vec(prop::collection::vec(-weight..weight, nvars), nblocks),
            prop::collection::vec(-3.0..3.0f64, nblocks),
            -3.0..3.0f64,
            prop::collection::vec(prop::collection::vec(0.5..3.0f64, nvars), rows),
            prop::collection::vec(-10.0..10.0f64, rows),
        )
            .prop_map(move |(blocks, c, bias, x, y)| Case {
                nvars,
                blocks,
                c,
                bias,
                x,
                y,
            })
    })
}

fn power_term(w: &[f64], x: &[f64]) -> f64 {
    w.iter().zip(x).map(|(w, x)| x.powf(*w)).product()
}

/// Loss difference between two parameter points that differ in one place,
/// summed as `(r1 - r0)(r1 + r0)` row by row.
fn loss_step(case: &Case, moved: &Case, l1: f64, l2: f64) -> f64 {
    let n = case.y.len() as f64;
    let mut diff = 0.0;
    for (x, y) in case.x.iter().zip(&case.y) {
        let pred = |c: &Case| -> (f64, Vec<f64>) {
            let t: Vec<f64> = c
                .blocks
                .iter()
                .zip(&c.c)
                .map(|(w, c)| c * power_term(w, x))
                .collect();
            (c.bias + t.iter().sum::<f64>(), t)
        };
        let (p0, t0) = pred(case);
        let (_, t1) = pred(moved);
        let delta = (moved.bias - case.bias) + t0.iter().zip(&t1).map(|(a, b)| b - a).sum::<f64>();
        let r0 = p0 - y;
        diff += delta * (2.0 * r0 + delta);
    }
    let pen = |c: &Case| -> f64 {
        c.blocks
            .iter()
            .flatten()
            .chain(&c.c)
            .map(|w| l1 * w.abs() + l2 * w * w)
            .sum()
    };
    diff / n + (pen(moved) - pen(case))
}

fn central_difference(case: &Case, coord: usize, l1: f64, l2: f64, h: f64) -> f64 {
    let shift = |d: f64| {
        let mut c = case.clone();
        let nw = c.nvars * c.blocks.len();
        if coord < nw {
            c.blocks[coord / c.nvars][coord % c.nvars] += d;
        } else if coord < nw + c.c.len() {
            c.c[coord - nw] += d;
        } else {
            c.bias += d;
        }
        c
    };
    (loss_step(case, &shift(h), l1, l2) - loss_step(case, &shift(-h), l1, l2)) / (2.0 * h)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn gradients_match_central_differences(case in arb_case(3.0, 4), reg in any::<bool>()) {
        let (l1, l2) = if reg { (1e-4, 1e-4) } else { (0.0, 0.0) };
        let flat: Vec<f64> = case.x.concat();
        let (_, grads) = case.params().backward(&flat, &case.y, l1, l2).unwrap();
        for (k, &g) in grads.values().enumerate() {
            if g.abs() <= 1e-8 {
                continue;
            }
            let fd = central_difference(&case, k, l1, l2, 1e-5);
            let rel = (g - fd).abs() / g.abs().max(fd.abs());
            prop_assert!(rel < 1e-5, "coordinate {k}: analytic {g}, fd {fd}");
        }
    }

    #[test]
    fn extraction_matches_forward(case in arb_case(2.0, 4)) {
        let params = case.params();
        let eq = params.extract_equation();
        for x in &case.x {
            let (pred, _) = params.forward(x).unwrap();
            let value = eq.evaluate(x).unwrap();
            prop_assert!((pred - value).abs() < 1e-9 * (1.0 + pred.abs()), "{pred} vs {value}");
        }
    }

    #[test]
    fn growth_adds_exactly_one_term(case in arb_case(3.0, 3), seed in any::<u64>()) {
        let before = case.params();
        let mut after = before.clone();
        after.grow(0.5, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(&after.blocks[..before.blocks.len()], &before.blocks[..]);
        prop_assert_eq!(after.output_bias.to_bits(), before.output_bias.to_bits());
        let c_new = *after.output_weights.last().unwrap();
        for x in &case.x {
            let (p0, _) = before.forward(x).unwrap();
            let (p1, outs) = after.forward(x).unwrap();
            prop_assert_eq!(p1, p0 + c_new * outs.last().unwrap());
        }
    }

    #[test]
    fn rounding_is_idempotent_and_tight(case in arb_case(3.0, 4), eps in prop::sample::select(vec![1e-3, 1e-2, 0.25, 1e-12])) {
        let raw = case.params();
        let mut once = raw.clone();
        once.round(eps);
        let mut twice = once.clone();
        twice.round(eps);
        prop_assert_eq!(&once, &twice);
        for (a, b) in raw.values().zip(once.values()) {
            prop_assert!((a - b).abs() <= eps / 2.0 * (1.0 + 1e-9) + 1e-15);
        }
    }
}

#[test]
fn clamp_bound_is_fifty() {
    assert_eq!(LOG_CLAMP, 50.0);
    let p = NetworkParams::from_parts(vec![vec![100.0]], vec![1.0], 0.0, 1).unwrap();
    let (y, _) = p.forward(&[3.0]).unwrap();
    assert_eq!(y, 50f64.exp());
}
