#![allow(dead_code)]

use std::path::PathBuf;

use voltplace::netmodel::{parse_matpower, Bus, BusKind, Line, LineStatus, Network};

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

pub fn load_case(name: &str) -> Network {
    let text = std::fs::read_to_string(data_path(name)).unwrap();
    parse_matpower(&text).unwrap()
}

pub fn bus(id: usize, kind: BusKind) -> Bus {
    Bus {
        id,
        kind,
        v_min: 0.9,
        v_max: 1.05,
        p_nom: 0.0,
        q_nom: 0.0,
        g_sh: 0.0,
        b_sh: 0.0,
        voltvar: None,
    }
}

pub fn line(from: usize, to: usize, r: f64, x: f64) -> Line {
    Line {
        from,
        to,
        r,
        x,
        b_sh: 0.0,
        status: LineStatus::Closed,
    }
}

pub fn two_bus(r: f64, x: f64, p: f64, q: f64) -> Network {
    let mut b2 = bus(2, BusKind::Pq);
    b2.p_nom = p;
    b2.q_nom = q;
    Network {
        base_mva: 1.0,
        buses: vec![bus(1, BusKind::Slack), b2],
        lines: vec![line(1, 2, r, x)],
    }
}

/// Bisection for the upper root of the two-bus voltage equation in u = V^2,
/// where (pl, ql) is the load drawn at the far bus.
pub fn two_bus_voltage(r: f64, x: f64, pl: f64, ql: f64) -> f64 {
    let f = |u: f64| u * u - u * (1.0 - 2.0 * (r * pl + x * ql)) + (r * r + x * x) * (pl * pl + ql * ql);
    let mut lo = (1.0 - 2.0 * (r * pl + x * ql)) / 2.0;
    let mut hi = 4.0;
    assert!(f(lo) < 0.0 && f(hi) > 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    (0.5 * (lo + hi)).sqrt()
}

use voltplace::cla::{fit_bundle, OutputKind, SelectionOptions};
use voltplace::placement::ConfigInput;
use voltplace::sampling::{draw_samples, InjectionRange, SampleOptions, SampleSet};

/// Training samples, selection pool and CLA bundle for one configuration.
pub struct Prepared {
    pub net: Network,
    pub range: InjectionRange,
    pub train: SampleSet,
    pub input: ConfigInput,
}

pub fn prepare(net: &Network, range: &InjectionRange, name: &str) -> Prepared {
    let opts = SampleOptions::default();
    let train = draw_samples(net, range, 1000, 1, &opts, name).unwrap();
    let extra = draw_samples(net, range, 4000, 2, &opts, name).unwrap();
    let bundle = fit_bundle(&train, Some(&extra), OutputKind::VSquared, &SelectionOptions::default()).unwrap();
    let all = train.concat(&extra);
    let input = ConfigInput::new(net, bundle, range.clone(), &all).unwrap();
    Prepared {
        net: net.clone(),
        range: range.clone(),
        train: all,
        input,
    }
}

use std::sync::OnceLock;

use voltplace::netmodel::Limits;
use voltplace::sampling::{range_from_fractions, RangeOverride, RangeTarget};

/// case10ba at 60% load with V_min = 0.90.
pub fn case10ba() -> &'static Prepared {
    static P: OnceLock<Prepared> = OnceLock::new();
    P.get_or_init(|| {
        let net = load_case("case10ba.m")
            .scaled_injections(0.6)
            .with_limits(Limits { v_min: 0.9, v_max: 1.05 });
        let r = range_from_fractions(&net, 0.5, 1.5, &[]).unwrap();
        prepare(&net, &r, "nominal")
    })
}

/// case33bw with PV export at buses 18 and 33, V_min = 0.91.
pub fn case33bw() -> &'static Prepared {
    static P: OnceLock<Prepared> = OnceLock::new();
    P.get_or_init(|| {
        let net = load_case("case33bw.m").with_limits(Limits { v_min: 0.91, v_max: 1.05 });
        let ov: Vec<_> = [18, 33]
            .iter()
            .map(|&bus| RangeOverride { bus, lo: -2.0, hi: 1.5, target: RangeTarget::Active })
            .collect();
        let r = range_from_fractions(&net, 0.5, 1.5, &ov).unwrap();
        prepare(&net, &r, "nominal")
    })
}

