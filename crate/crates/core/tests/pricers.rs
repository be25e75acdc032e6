use hedgesim::market::{daily_grid, HestonParams};
use hedgesim::pricers::{
    heston_mc_price, vv_weights, BarrierMonitoring, BsPricer, Greeks, HestonPdePricer, ModelPricer,
    PdeGrid, PricerKind, Snapshot, VvPricer,
};
use hedgesim::pricing::{bs_dnt_price, bs_vanilla_price, DntInputs, FxMarket, OptionKind};
use hedgesim::products::{DoubleNoTouch, Portfolio, Position, Product, Vanilla};
use hedgesim::rates::Curves;
use hedgesim::surface::{build_surface, SurfaceSpec, VolSurface};
use hedgesim::Error;
use proptest::prelude::*;

fn call_greeks(m: &FxMarket, strike: f64, vol: f64) -> Greeks {
    Greeks::by_bumping(m.spot, vol, |s, v| {
        bs_vanilla_price(&FxMarket { spot: s, ..*m }.quote(strike, v, OptionKind::Call))
    })
    .unwrap()
}

fn market() -> FxMarket {
    FxMarket {
        spot: 1.2812,
        df_dom: 0.98,
        df_for: 0.97,
        expiry: 0.75,
    }
}

fn pivot_greeks() -> [Greeks; 3] {
    let m = market();
    [1.22, 1.28, 1.34].map(|k| call_greeks(&m, k, 0.1))
}

#[test]
fn atm_pivot_matches_itself() {
    let p = pivot_greeks();
    let x = vv_weights(&p[1], &p).unwrap();
    assert!((x[0]).abs() < 1e-8 && (x[1] - 1.0).abs() < 1e-8 && x[2].abs() < 1e-8, "{x:?}");
}

#[test]
fn forward_has_zero_weights() {
    let zero = Greeks {
        vega: 0.0,
        vanna: 0.0,
        volga: 0.0,
    };
    assert_eq!(vv_weights(&zero, &pivot_greeks()).unwrap(), [0.0; 3]);
}

#[test]
fn identical_pivots_are_singular() {
    let g = pivot_greeks()[0];
    assert!(matches!(vv_weights(&g, &[g, g, g]), Err(Error::Numeric(_))));
}

/// Gaussian elimination with partial pivoting.
fn gauss(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> [f64; 3] {
    for c in 0..3 {
        let p = (c..3)
            .max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))
            .unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..3 {
            let f = a[r][c] / a[c][c];
            for k in c..3 {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = [0.0; 3];
    for r in (0..3).rev() {
        let s: f64 = (r + 1..3).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

proptest! {
    #[test]
    fn weights_agree_with_elimination(
        vega in -1.0f64..1.0, vanna in -5.0f64..5.0, volga in -5.0f64..5.0,
    ) {
        let p = pivot_greeks();
        let product = Greeks { vega, vanna, volga };
        let x = vv_weights(&product, &p).unwrap();
        let mut a = [[0.0; 3]; 3];
        for j in 0..3 {
            a[0][j] = p[j].vega;
            a[1][j] = p[j].vanna;
            a[2][j] = p[j].volga;
        }
        let y = gauss(a, [vega, vanna, volga]);
        for i in 0..3 {
            prop_assert!((x[i] - y[i]).abs() < 1e-10 * (1.0 + y[i].abs()), "{x:?} {y:?}");
            let r: f64 = (0..3).map(|j| a[i][j] * x[j]).sum::<f64>() - [vega, vanna, volga][i];
            prop_assert!(r.abs() < 1e-10);
        }
    }
}

fn fig1() -> HestonParams {
    HestonParams::eurusd_2006()
}

fn long_dnt(lower: f64, upper: f64) -> Portfolio {
    Portfolio::new(vec![Product::DoubleNoTouch(DoubleNoTouch {
        lower,
        upper,
        expiry: 382.0 / 365.0,
        notional: 1.0,
        position: Position::Long,
    })])
}

fn surface(p: &HestonParams, c: &Curves) -> VolSurface {
    build_surface(p, &SurfaceSpec::default(), c, 0.0).unwrap()
}

fn snap<'a>(p: &HestonParams, s: &'a VolSurface, c: &'a Curves) -> Snapshot<'a> {
    Snapshot {
        time: 0.0,
        spot: p.s0,
        variance: p.v0,
        surface: Some(s),
        curves: c,
    }
}

#[test]
fn bs_pricer_uses_the_atm_vol_at_expiry() {
    let (p, c) = (fig1(), Curves::flat(0.03, 0.02));
    let s = surface(&p, &c);
    let port = long_dnt(1.2130, 1.3622);
    let got = BsPricer.price(&port, &port.initial_state(), &snap(&p, &s, &c)).unwrap();
    let want = bs_dnt_price(&DntInputs {
        spot: p.s0,
        lower: 1.2130,
        upper: 1.3622,
        vol: s.atm_vol(382.0 / 365.0),
        rd: 0.03,
        rf: 0.02,
        expiry: 382.0 / 365.0,
        notional: 1.0,
    })
    .unwrap();
    assert!((got - want).abs() < 1e-14);
}

#[test]
fn flat_smile_makes_vv_equal_bs() {
    let p = HestonParams { eta: 0.0, ..fig1() };
    let c = Curves::zero();
    let s = surface(&p, &c);
    let port = long_dnt(1.2130, 1.3622);
    let sn = snap(&p, &s, &c);
    let bs = BsPricer.price(&port, &port.initial_state(), &sn).unwrap();
    let vv = VvPricer::default().price(&port, &port.initial_state(), &sn).unwrap();
    assert!((vv - bs).abs() < 1e-10, "vv {vv} bs {bs}");
}

#[test]
fn wing_pivot_prices_at_its_market_vol() {
    let (p, c) = (fig1(), Curves::flat(0.01, 0.015));
    let s = surface(&p, &c);
    let sn = snap(&p, &s, &c);
    let tau = 0.5;
    let vv = VvPricer::default();
    let (m, pivots) = vv.pivots(&sn, tau).unwrap();
    assert!(pivots[0].strike < pivots[1].strike && pivots[1].strike < pivots[2].strike);
    let leg = Vanilla {
        strike: pivots[2].strike,
        expiry: tau,
        kind: OptionKind::Call,
        notional: 1.0,
        position: Position::Long,
    };
    let port = Portfolio::new(vec![Product::Vanilla(leg)]);
    let got = vv.price(&port, &port.initial_state(), &sn).unwrap();
    let want = bs_vanilla_price(&m.quote(pivots[2].strike, pivots[2].market_vol, OptionKind::Call)).unwrap();
    assert!((got - want).abs() < 1e-8, "{got} vs {want}");
}

#[test]
fn zero_attenuation_is_bs() {
    let (p, c) = (fig1(), Curves::zero());
    let s = surface(&p, &c);
    let port = long_dnt(1.2130, 1.3622);
    let sn = snap(&p, &s, &c);
    let vv = VvPricer {
        attenuation: 0.0,
        ..VvPricer::default()
    };
    let a = vv.price(&port, &port.initial_state(), &sn).unwrap();
    let b = BsPricer.price(&port, &port.initial_state(), &sn).unwrap();
    assert_eq!(a, b);
    assert!(VvPricer { attenuation: 1.5, ..vv }.validate().is_err());
}

#[test]
fn unreachable_barriers_pay_the_discounted_notional() {
    let c = Curves::flat(0.02, 0.0);
    let port = long_dnt(0.01, 100.0);
    for m in [BarrierMonitoring::Daily, BarrierMonitoring::BrownianBridge] {
        let est = heston_mc_price(&port, &fig1(), &c, 0.0, 1000, 5, m).unwrap();
        let df = c.domestic.discount(0.0, 382.0 / 365.0);
        assert_eq!(est.price, df);
        assert_eq!(est.std_error, 0.0);
    }
}

#[test]
fn bridge_only_removes_value() {
    let (p, c) = (fig1(), Curves::zero());
    let port = long_dnt(1.2130, 1.3622);
    let daily = heston_mc_price(&port, &p, &c, 0.0, 4000, 11, BarrierMonitoring::Daily).unwrap();
    let bridge = heston_mc_price(&port, &p, &c, 0.0, 4000, 11, BarrierMonitoring::BrownianBridge).unwrap();
    assert!(daily.price >= bridge.price);
    assert!(bridge.price > 0.0);
    assert!(heston_mc_price(&port, &p, &c, 0.0, 10, 11, BarrierMonitoring::Daily).is_err());
}

#[test]
fn every_pricer_keeps_the_dnt_inside_its_bounds() {
    let (p, c) = (fig1(), Curves::flat(0.02, 0.01));
    let s = surface(&p, &c);
    let sn = snap(&p, &s, &c);
    let df = c.domestic.discount(0.0, 382.0 / 365.0);
    let grid = daily_grid(382);
    for (lo, hi) in [(1.2130, 1.3622), (1.26, 1.30), (1.0, 1.6)] {
        let port = long_dnt(lo, hi).snapped(&grid).unwrap();
        let st = port.initial_state();
        let pde = HestonPdePricer::new(&p, &c, &port, BarrierMonitoring::BrownianBridge, &PdeGrid::default()).unwrap();
        let prices = [
            BsPricer.price(&port, &st, &sn).unwrap(),
            VvPricer::default().price(&port, &st, &sn).unwrap(),
            heston_mc_price(&port, &p, &c, 0.0, 2000, 1, BarrierMonitoring::BrownianBridge)
                .unwrap()
                .price,
            pde.price(&port, &st, &sn).unwrap(),
        ];
        for x in prices {
            assert!((0.0..=df + 1e-12).contains(&x), "{lo}/{hi}: {prices:?}");
        }
    }
}

#[test]
fn pde_agrees_with_monte_carlo_for_both_monitorings() {
    let (p, c) = (fig1(), Curves::zero());
    let grid = daily_grid(382);
    let port = long_dnt(1.2130, 1.3622).snapped(&grid).unwrap();
    let st = port.initial_state();
    let sn = Snapshot {
        time: 0.0,
        spot: p.s0,
        variance: p.v0,
        surface: None,
        curves: &c,
    };
    for m in [BarrierMonitoring::Daily, BarrierMonitoring::BrownianBridge] {
        let pde = HestonPdePricer::new(&p, &c, &port, m, &PdeGrid::default()).unwrap();
        let x = pde.price(&port, &st, &sn).unwrap();
        let mc = heston_mc_price(&port, &p, &c, 0.0, 20_000, 3, m).unwrap();
        // sampling error plus a small allowance for the two discretizations
        let tol = 3.0 * mc.std_error + 0.003;
        assert!((x - mc.price).abs() < tol, "{m:?}: pde {x} mc {} ± {}", mc.price, mc.std_error);
    }
}

#[test]
fn pde_pricer_reads_state_and_lifecycle() {
    let (p, c) = (fig1(), Curves::zero());
    let grid = daily_grid(382);
    let port = long_dnt(1.2130, 1.3622).snapped(&grid).unwrap();
    let pde = HestonPdePricer::new(&p, &c, &port, BarrierMonitoring::Daily, &PdeGrid::default()).unwrap();
    assert!(!pde.needs_surface());
    let mut st = port.initial_state();
    let at = |t: f64, s: f64, v: f64, st: &hedgesim::products::LifecycleState| {
        pde.price(
            &port,
            st,
            &Snapshot {
                time: t,
                spot: s,
                variance: v,
                surface: None,
                curves: &c,
            },
        )
    };
    let mid = at(100.0 / 365.0, 1.2876, 0.0097, &st).unwrap();
    assert!(at(100.0 / 365.0, 1.2876, 0.02, &st).unwrap() < mid);
    assert!(at(300.0 / 365.0, 1.2876, 0.0097, &st).unwrap() > mid);
    assert!(at(100.5 / 365.0, 1.2876, 0.0097, &st).is_err());
    st.legs[0].knocked = true;
    assert_eq!(at(100.0 / 365.0, 1.2876, 0.0097, &st).unwrap(), 0.0);
}

#[test]
fn heston_pricer_refuses_faders() {
    let grid = daily_grid(600);
    let port = Portfolio::fader_fixture().snapped(&grid).unwrap();
    let err = HestonPdePricer::new(&fig1(), &Curves::zero(), &port, BarrierMonitoring::Daily, &PdeGrid::default())
        .unwrap_err();
    assert!(matches!(err, Error::Unsupported(_)));
}

#[test]
fn pricer_names_parse() {
    for k in [PricerKind::Bs, PricerKind::Vv, PricerKind::HestonMc] {
        assert_eq!(k.label().parse::<PricerKind>().unwrap(), k);
    }
    assert_eq!("heston".parse::<PricerKind>().unwrap(), PricerKind::HestonMc);
    assert!("local_vol".parse::<PricerKind>().is_err());
}

#[test]
fn fader_value_is_continuous_across_the_traded_knock_out() {
    use hedgesim::pricers::{bs_fader_price, KoMonitoring};
    let leg = match &Portfolio::fader_fixture().legs[0] {
        Product::Fader(f) => f.clone(),
        _ => unreachable!(),
    };
    let state = hedgesim::products::LegState::default();
    let curves = Curves::zero();
    let ko = leg.ko_lower.unwrap();
    let price = |s: f64| bs_fader_price(&leg, &state, 0.3, s, 0.1, &curves, KoMonitoring::Discrete(1.0 / 365.0)).unwrap();
    let spots: Vec<f64> = (-20..=20).map(|k| ko * (1.0 + k as f64 * 1e-4)).collect();
    let steps: Vec<f64> = spots.windows(2).map(|w| (price(w[1]) - price(w[0])).abs()).collect();
    let largest = steps.iter().cloned().fold(0.0, f64::max);
    let smallest = steps.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(largest < 3.0 * smallest, "jump of {largest} against {smallest}");
}
