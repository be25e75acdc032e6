use hedgesim::hedging::{
    external_greeks, hedge_option_at, hedge_option_greeks, model_vega_theta, node_sensitivities,
    run_hedge_path, ExternalGreeks, HedgeRatios, HedgeSetup, HedgeSpec, PortfolioValuer, VarthetaMode,
    VARIANCE_BUMP,
};
use hedgesim::market::{daily_grid, simulate_paths, HestonParams, PathGrid};
use hedgesim::pricers::{BarrierMonitoring, BsPricer, HestonPdePricer, ModelPricer, PdeGrid, Snapshot, VvPricer};
use hedgesim::pricing::OptionKind;
use hedgesim::products::{
    FaderForwardLeg, HedgeVanilla, LegState, LifecycleState, Portfolio, Position, Product, Vanilla,
};
use hedgesim::rates::Curves;
use hedgesim::surface::{build_surface, bumped_surface, SurfaceSpec};
use hedgesim::Error;
use proptest::prelude::*;

fn fig1() -> HestonParams {
    HestonParams::eurusd_2006()
}

fn setup(curves: Curves, spec: HedgeSpec) -> HedgeSetup {
    HedgeSetup {
        params: fig1(),
        curves,
        spec,
        seed: 9,
    }
}

/// `Π = a·S + b` whatever the state: Δ = a and ϑ = 0.
struct Linear {
    a: f64,
    b: f64,
}

impl ModelPricer for Linear {
    fn name(&self) -> &'static str {
        "linear"
    }
    fn needs_surface(&self) -> bool {
        false
    }
    fn price(&self, _: &Portfolio, _: &LifecycleState, snap: &Snapshot) -> hedgesim::Result<f64> {
        Ok(self.a * snap.spot + self.b)
    }
}

fn far_vanilla() -> Portfolio {
    Portfolio::new(vec![Product::Vanilla(Vanilla {
        strike: 1.3,
        expiry: 1.0,
        kind: OptionKind::Call,
        notional: 1.0,
        position: Position::Long,
    })])
}

fn short_path(spots: &[f64]) -> PathGrid {
    PathGrid {
        path_id: 0,
        dates: daily_grid(spots.len() - 1),
        spots: spots.to_vec(),
        variances: vec![0.0097; spots.len()],
    }
}

#[test]
fn three_step_ledger_matches_the_telescoping_sum() {
    let (rd, rf) = (0.05, 0.02);
    let curves = Curves::flat(rd, rf);
    let spots = [1.28, 1.29, 1.27, 1.30];
    let path = short_path(&spots);
    let (a, b) = (0.7, -0.4);
    let ledger = run_hedge_path(&far_vanilla(), &Linear { a, b }, &path, &setup(curves, HedgeSpec::default())).unwrap();

    // by hand: α_i = −a/B^f_i, B^f_i = e^{rf·t_i}; each step carries the
    // previous total at rd and adds the step's model and hedge gains
    let dt = 1.0 / 365.0;
    let bf = |i: usize| (rf * i as f64 * dt).exp();
    let pi = |i: usize| a * spots[i] + b;
    let h = |i: usize, at: usize| -a / bf(i) * spots[at] * bf(at);
    let growth = (rd * dt).exp();
    let mut total = 0.0;
    for i in 0..3 {
        total = (total - h(i, i) - pi(i)) * growth + h(i, i + 1) + pi(i + 1);
    }
    assert!((ledger.terminal_total() - total).abs() < 1e-14, "{} vs {total}", ledger.terminal_total());
    let r0 = &ledger.rows[0];
    assert_eq!(r0.cash, -r0.price - r0.hedge_value);
    assert_eq!(r0.total, 0.0);
    for (i, r) in ledger.rows.iter().enumerate() {
        assert!((r.alpha + a / bf(i)).abs() < 1e-9);
        assert_eq!(r.beta, 0.0);
        assert!((r.foreign_account - bf(i)).abs() < 1e-15);
        assert_eq!(r.total, r.cash + r.hedge_value + r.price);
    }
}

#[test]
fn idle_book_keeps_its_cash_at_zero_rates() {
    let path = short_path(&[1.28, 1.29, 1.27, 1.30]);
    let ledger = run_hedge_path(
        &far_vanilla(),
        &Linear { a: 0.0, b: 0.25 },
        &path,
        &setup(Curves::zero(), HedgeSpec::default()),
    )
    .unwrap();
    for r in &ledger.rows {
        assert_eq!(r.cash, -0.25);
        assert_eq!(r.total, 0.0);
    }
}

#[test]
fn heston_vanilla_replicates_itself_with_its_own_hedge() {
    let curves = Curves::flat(0.03, 0.01);
    let p = fig1();
    let days = 183;
    let tenor = days as f64 / 365.0;
    let opt = hedge_option_at(&p, &curves, 0.0, p.s0, p.v0, tenor).unwrap();
    let port = Portfolio::new(vec![Product::Vanilla(Vanilla {
        strike: opt.strike,
        expiry: tenor,
        kind: OptionKind::Call,
        notional: 1.0,
        position: Position::Long,
    })]);
    let spec = HedgeSpec {
        hedge: HedgeVanilla {
            tenor,
            static_strike: true,
        },
        ..HedgeSpec::default()
    };
    let pricer = HestonPdePricer::new(&p, &curves, &port, BarrierMonitoring::Daily, &PdeGrid::default()).unwrap();
    let paths = simulate_paths(&p, &curves, &daily_grid(days), 5, 17).unwrap();
    for path in &paths {
        let ledger = run_hedge_path(&port, &pricer, path, &setup(curves.clone(), spec.clone())).unwrap();
        for r in &ledger.rows {
            assert!(r.total.abs() < 1e-10, "t={} total {}", r.time, r.total);
        }
        assert!((ledger.rows[1].beta + 1.0).abs() < 1e-12);
        assert!(ledger.rows[1].alpha.abs() < 1e-9);
    }
}

fn fader_leg() -> FaderForwardLeg {
    FaderForwardLeg {
        strike: 1.29,
        fading_dates: (1..=20).map(|d| d as f64 / 365.0).collect(),
        fractions: vec![0.05; 20],
        lower_fade: 1.175,
        upper_fade: None,
        ko_lower: Some(1.15),
        ko_upper: None,
        max_notional: 1.0,
        expiry: 30.0 / 365.0,
        position: Position::Short,
    }
}

#[test]
fn knocked_fader_is_a_flat_line() {
    let mut spots = vec![1.2096, 1.20, 1.19, 1.18, 1.16, 1.149];
    spots.extend([1.16, 1.21, 1.25, 1.19, 1.14, 1.10, 1.17, 1.22, 1.28, 1.31]);
    spots.resize(31, 1.27);
    let mut path = short_path(&spots);
    for (i, v) in path.variances.iter_mut().enumerate() {
        *v = 0.004 + 0.0005 * (i % 7) as f64;
    }
    let port = Portfolio::new(vec![Product::Fader(fader_leg())]);
    let vv = VvPricer::default();
    for pricer in [&BsPricer as &dyn ModelPricer, &vv] {
        let ledger = run_hedge_path(&port, pricer, &path, &setup(Curves::zero(), HedgeSpec::default())).unwrap();
        let ko = ledger.rows.iter().position(|r| r.events.iter().any(|e| e.starts_with("knock"))).unwrap();
        assert_eq!(ko, 5);
        let flat = ledger.rows[ko].total;
        for r in &ledger.rows[ko..] {
            assert!((r.total - flat).abs() < 1e-12, "{}: t={} {} vs {flat}", pricer.name(), r.time, r.total);
            assert!(r.vartheta.abs() < 1e-9 && r.beta.abs() < 1e-9);
        }
        assert!(ledger.rows[ko - 1].vartheta.abs() > 1e-4);
    }
}

#[test]
fn forward_has_constant_delta_and_no_vartheta() {
    let curves = Curves::flat(0.02, 0.035);
    let p = fig1();
    let port = Portfolio::new(vec![Product::Fader(fader_leg())]);
    let mut state = port.initial_state();
    state.legs[0] = LegState {
        knocked: true,
        knock_time: Some(2.0 / 365.0),
        accrued: 0.4,
        settled: false,
    };
    let t = 10.0 / 365.0;
    let tau = 20.0 / 365.0;
    let pf = curves.foreign.discount(t, t + tau);
    for s in [1.1, 1.25, 1.4] {
        let (_, g) = external_greeks(&BsPricer, &port, &state, &p, &curves, &HedgeSpec::default().surface, t, s, 0.01)
            .unwrap();
        assert!((g.delta + 0.4 * pf).abs() < 1e-9, "{g:?}");
        assert_eq!(g.vartheta, 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn hedge_vanilla_has_positive_vartheta(spot in 1.0f64..1.6, v in 1e-4f64..0.05, t in 0.0f64..1.0) {
        let curves = Curves::flat(0.02, 0.01);
        let o = hedge_option_at(&fig1(), &curves, t, spot, v, 0.5).unwrap();
        let (c, g) = hedge_option_greeks(&fig1(), &curves, &o, t, spot, v).unwrap();
        prop_assert!(c > 0.0);
        prop_assert!(g.vartheta > 0.0);
        prop_assert!(g.delta > 0.3 && g.delta < 0.7);
    }
}

#[test]
fn ratios_follow_the_two_factor_formula() {
    let pi = ExternalGreeks {
        delta: -0.8,
        vartheta: 12.0,
    };
    let c = ExternalGreeks {
        delta: 0.5,
        vartheta: 2.0,
    };
    let r = HedgeRatios::new(&pi, &c, 1.01).unwrap();
    assert_eq!(r.beta, -6.0);
    assert!((r.alpha - (0.8 + 3.0) / 1.01).abs() < 1e-15);
    // hedged book is flat in both factors
    assert!((pi.delta + r.beta * c.delta + r.alpha * 1.01).abs() < 1e-15);
    let flat = ExternalGreeks {
        delta: 0.5,
        vartheta: 1e-13,
    };
    assert!(matches!(HedgeRatios::new(&pi, &flat, 1.0), Err(Error::HedgeDegenerate { .. })));
    // nothing to hedge in variance: spot only
    let spot_only = ExternalGreeks {
        delta: -0.8,
        vartheta: 0.0,
    };
    let r = HedgeRatios::new(&spot_only, &flat, 2.0).unwrap();
    assert_eq!((r.alpha, r.beta), (0.4, 0.0));
}

#[test]
fn dnt_vartheta_near_the_barrier_is_large() {
    let p = fig1();
    let curves = Curves::zero();
    let mut port = Portfolio::dnt_fixture();
    if let Product::DoubleNoTouch(d) = &mut port.legs[0] {
        d.position = Position::Long;
    }
    let st = port.initial_state();
    let t = (382.0 - 18.0) / 365.0;
    let (s, v) = (1.2193, 8.1894e-4);
    let spec = HedgeSpec::default().surface;
    let (_, g) = external_greeks(&BsPricer, &port, &st, &p, &curves, &spec, t, s, v).unwrap();
    assert!(g.vartheta.abs() > 100.0 && g.vartheta.abs() < 400.0, "{g:?}");

    // chain rule through the ATM node at the remaining life
    let mut valuer = PortfolioValuer::new(&BsPricer, &p, &curves, &spec);
    let (_, chain) = valuer.value_and_greeks(&port, &st, t, s, v, VarthetaMode::ChainRule).unwrap();
    assert!((chain.vartheta / g.vartheta - 1.0).abs() < 0.05, "{} vs {}", chain.vartheta, g.vartheta);
}

#[test]
fn chain_rule_with_unit_sensitivities_is_the_parallel_vega() {
    let p = fig1();
    let curves = Curves::flat(0.01, 0.02);
    let port = Portfolio::dnt_fixture();
    let st = port.initial_state();
    let spec = SurfaceSpec {
        tolerance: 1e-11,
        ..SurfaceSpec::default()
    };
    let surface = build_surface(&p, &spec, &curves, 0.0).unwrap();
    let vv = VvPricer::default();
    let valuer = PortfolioValuer::new(&vv, &p, &curves, &spec);
    let vegas = valuer.node_vegas(&port, &st, &surface).unwrap();
    let ones: Vec<Vec<f64>> = vegas.iter().map(|r| vec![1.0; r.len()]).collect();
    let price = |s: &hedgesim::surface::VolSurface| {
        VvPricer::default()
            .price(
                &port,
                &st,
                &Snapshot {
                    time: 0.0,
                    spot: p.s0,
                    variance: p.v0,
                    surface: Some(s),
                    curves: &curves,
                },
            )
            .unwrap()
    };
    let h = 1e-4;
    let parallel = (price(&surface.with_parallel_shift(h)) - price(&surface.with_parallel_shift(-h))) / (2.0 * h);
    let chained = model_vega_theta(&vegas, &ones);
    assert!((chained - parallel).abs() < 1e-3 * parallel.abs(), "{chained} vs {parallel}");
}

#[test]
fn chain_rule_matches_external_vartheta_for_a_vanilla() {
    let p = fig1();
    let curves = Curves::zero();
    let port = Portfolio::new(vec![Product::Vanilla(Vanilla {
        strike: 1.33,
        expiry: 0.75,
        kind: OptionKind::Call,
        notional: 1.0,
        position: Position::Long,
    })]);
    let st = port.initial_state();
    let spec = HedgeSpec::default().surface;
    let vv = VvPricer::default();
    let mut valuer = PortfolioValuer::new(&vv, &p, &curves, &spec);
    let (_, ext) = valuer.value_and_greeks(&port, &st, 0.0, p.s0, p.v0, VarthetaMode::External).unwrap();
    let (_, chain) = valuer.value_and_greeks(&port, &st, 0.0, p.s0, p.v0, VarthetaMode::ChainRule).unwrap();
    assert!(ext.vartheta > 0.0);
    assert!((chain.vartheta / ext.vartheta - 1.0).abs() < 0.02, "{} vs {}", chain.vartheta, ext.vartheta);

    let base = build_surface(&p, &spec, &curves, 0.0).unwrap();
    let up = bumped_surface(&p, &spec, &curves, 0.0, VARIANCE_BUMP).unwrap();
    for row in node_sensitivities(&base, &up, VARIANCE_BUMP) {
        assert!(row.iter().all(|&x| x > 0.0));
    }
}

#[test]
fn failures_carry_the_path_and_date() {
    let p = fig1();
    let grid = daily_grid(10);
    let port = Portfolio::new(vec![Product::DoubleNoTouch(hedgesim::products::DoubleNoTouch {
        lower: 1.2,
        upper: 1.4,
        expiry: 10.0 / 365.0,
        notional: 1.0,
        position: Position::Short,
    })]);
    let pricer = HestonPdePricer::new(&p, &Curves::zero(), &port, BarrierMonitoring::Daily, &PdeGrid::default()).unwrap();
    let mut path = simulate_paths(&p, &Curves::zero(), &grid, 1, 1).unwrap().remove(0);
    path.path_id = 77;
    path.dates[3] += 0.3 / 365.0;
    let err = run_hedge_path(&port, &pricer, &path, &setup(Curves::zero(), HedgeSpec::default())).unwrap_err();
    match err {
        Error::Path { path, time, .. } => {
            assert_eq!(path, 77);
            assert_eq!(time, path_time(&grid));
        }
        other => panic!("unexpected {other}"),
    }
}

fn path_time(grid: &[f64]) -> f64 {
    grid[3] + 0.3 / 365.0
}

#[test]
fn bridge_monitoring_only_adds_knocks() {
    let p = fig1();
    let grid = daily_grid(382);
    let port = Portfolio::dnt_fixture().snapped(&grid).unwrap();
    let paths = simulate_paths(&p, &Curves::zero(), &grid, 40, 5).unwrap();
    let daily = HedgeSpec {
        hedged: false,
        ..HedgeSpec::default()
    };
    let bridge = HedgeSpec {
        monitoring: BarrierMonitoring::BrownianBridge,
        ..daily.clone()
    };
    let pricer = Linear { a: 0.0, b: 0.0 };
    let (mut kd, mut kb, mut earlier) = (0, 0, 0);
    for path in &paths {
        let knock = |spec: &HedgeSpec| {
            run_hedge_path(&port, &pricer, path, &setup(Curves::zero(), spec.clone()))
                .unwrap()
                .rows
                .iter()
                .position(|r| r.events.iter().any(|e| e.starts_with("knock")))
        };
        let (d, b) = (knock(&daily), knock(&bridge));
        if let Some(d) = d {
            assert!(b.is_some_and(|b| b <= d));
        }
        kd += d.is_some() as usize;
        kb += b.is_some() as usize;
        earlier += (b.is_some() && (d.is_none() || b < d)) as usize;
    }
    assert!(kb >= kd);
    assert!(earlier > 0, "bridge never knocked before the daily check");
}
