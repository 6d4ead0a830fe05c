mod common;

use common::rel_close;
use proptest::prelude::*;
use wso_lab::nn::relative_error;
use wso_lab::tensor::Tensor;
use wso_lab::windowing::{window, DisplayRange, WindowFnKind, WindowSetting};
use wso_lab::wso::{settings_from_layer, WsoChannel, WsoLayer};

const STEP_W: f64 = 1e-3;
const STEP_B: f64 = 1e-2;
const TOLERANCE: f64 = 1e-4;

fn kind() -> impl Strategy<Value = WindowFnKind> {
    prop_oneof![Just(WindowFnKind::Linear), Just(WindowFnKind::Sigmoid)]
}

fn setting() -> impl Strategy<Value = WindowSetting> {
    (-1000.0f64..3000.0, 1.0f64..4000.0).prop_map(|(l, w)| WindowSetting::new(l, w).unwrap())
}

/// `Σ c·F(x)` over the layer output.
fn weighted_output(layer: &WsoLayer, x: &Tensor, c: &[f64]) -> f64 {
    layer.forward(x).unwrap().data().iter().zip(c).map(|(o, c)| o * c).sum()
}

/// A random layer and a 2×3 batch. Linear draws keep every pre-activation
/// out of reach of the clamp corners under the FD steps.
fn layer_and_batch() -> impl Strategy<Value = (WsoLayer, Tensor, Vec<f64>)> {
    (kind(), 1usize..=3)
        .prop_flat_map(|(kind, channels)| {
            let params = match kind {
                WindowFnKind::Linear => (0.5f64..50.0, -20.0f64..200.0).boxed(),
                WindowFnKind::Sigmoid => (0.05f64..2.0, -3.0f64..3.0).boxed(),
            };
            (
                Just(kind),
                prop::collection::vec(params, channels),
                prop::collection::vec(0.25f64..4.0, 6),
                prop::collection::vec(0.1f64..1.0, 6 * channels),
            )
        })
        .prop_filter("pre-activation near a clamp corner", |(kind, wb, xs, _)| {
            let u = DisplayRange::default().u();
            *kind == WindowFnKind::Sigmoid
                || wb.iter().all(|&(w, b)| {
                    xs.iter().all(|&x| {
                        let z = w * x + b;
                        let reach = 4.0 * (STEP_W * x + STEP_B);
                        z.abs() > reach && (z - u).abs() > reach
                    })
                })
        })
        .prop_map(|(kind, wb, xs, c)| {
            let chans: Vec<WsoChannel> = wb.iter().map(|&(w, b)| WsoChannel { w, b }).collect();
            let layer = WsoLayer::from_channels(kind, DisplayRange::default(), &chans).unwrap();
            (layer, Tensor::new(vec![2, 1, 1, 3], xs).unwrap(), c)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn settings_round_trip(kind in kind(), settings in prop::collection::vec(setting(), 1..4)) {
        let layer = WsoLayer::init_from_settings(kind, DisplayRange::default(), &settings).unwrap();
        let back = settings_from_layer(&layer).unwrap();
        for (a, b) in settings.iter().zip(&back) {
            prop_assert!((a.level() - b.level()).abs() <= 1e-9 * a.level().abs().max(a.width()), "{a:?} {b:?}");
            prop_assert!(rel_close(a.width(), b.width(), 1e-9), "{a:?} {b:?}");
        }
    }

    #[test]
    fn forward_matches_closed_form(kind in kind(), s in setting(), offsets in prop::collection::vec(-1.5f64..1.5, 1..16)) {
        let d = DisplayRange::default();
        let layer = WsoLayer::init_from_settings(kind, d, &[s]).unwrap();
        let xs: Vec<f64> = offsets.iter().map(|t| s.level() + t * s.width()).collect();
        let out = layer.forward(&Tensor::new(vec![1, 1, 1, xs.len()], xs.clone()).unwrap()).unwrap();
        for (x, o) in xs.iter().zip(out.data()) {
            let expected = window(kind, *x, s, d).unwrap() / d.u();
            prop_assert!((o - expected).abs() <= 1e-12 * expected.abs().max(1.0), "x {x}: {o} vs {expected}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn gradients_match_central_differences((layer, x, c) in layer_and_batch()) {
        let upstream = Tensor::new(vec![2, layer.num_channels(), 1, 3], c.clone()).unwrap();
        let (grads, _) = layer.backward(&x, &upstream).unwrap();
        let base = layer.channels();
        for ch in 0..base.len() {
            for (which, step) in [("w", STEP_W), ("b", STEP_B)] {
                let at = |delta: f64| {
                    let mut chans = base.clone();
                    if which == "w" { chans[ch].w += delta } else { chans[ch].b += delta }
                    weighted_output(&WsoLayer::from_channels(layer.kind(), layer.range(), &chans).unwrap(), &x, &c)
                };
                let numeric = (at(step) - at(-step)) / (2.0 * step);
                let analytic = if which == "w" { grads.w[ch] } else { grads.b[ch] };
                let err = relative_error(analytic, numeric);
                prop_assert!(err < TOLERANCE, "{which}[{ch}] analytic {analytic} numeric {numeric} err {err}");
            }
        }
    }
}
