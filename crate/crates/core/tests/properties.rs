use chrono::{Duration, TimeZone, Utc};
use proptest::prelude::*;

use gridprice::demand::{DemandCurve, DemandSegment};
use gridprice::dispatch::{msv_heuristic_bids, window_plan};
use gridprice::io::WeatherTable;
use gridprice::metrics::{duration_curve, price_share, PricePredicate};
use gridprice::model::{annuity, CapacitySet, StorageCapacity};

fn segments() -> impl Strategy<Value = Vec<DemandSegment<f64>>> {
    prop::collection::vec((10.0..5000.0f64, 0.5..100.0f64, 0.0..1.0f64), 1..4).prop_map(|v| {
        v.into_iter()
            // Width up to the zero-price point keeps the marginal utility non-negative.
            .map(|(a, b, f)| DemandSegment { a, b, width: (a / b) * (0.05 + 0.95 * f) })
            .collect()
    })
}

proptest! {
    #[test]
    fn annuity_repays_principal(rate in 0.001..0.2f64, years in 1u32..80) {
        let a = annuity(rate, years as f64).unwrap();
        let pv: f64 = (1..=years).map(|k| a / (1.0 + rate).powi(k as i32)).sum();
        prop_assert!((pv - 1.0).abs() < 1e-10);
    }

    #[test]
    fn demand_falls_with_price(segs in segments(), p1 in 0.0..6000.0f64, dp in 0.0..500.0f64) {
        let c = DemandCurve::PiecewiseLinear { segments: segs };
        prop_assert!(c.demand_at(p1 + dp) <= c.demand_at(p1) + 1e-9);
        let total = c.total_width();
        prop_assert!(c.demand_at(0.0) <= total + 1e-9);
    }

    #[test]
    fn inverse_demand_round_trips(segs in segments(), f in 0.01..0.99f64) {
        let c = DemandCurve::PiecewiseLinear { segments: segs };
        let d = f * c.total_width();
        let p = c.inverse_demand(d).unwrap();
        prop_assert!(p >= -1e-9);
        prop_assert!((c.demand_at(p) - d).abs() < 1e-6 * (1.0 + d));
    }

    #[test]
    fn utility_is_concave(segs in segments(), f1 in 0.0..1.0f64, f2 in 0.0..1.0f64) {
        let c = DemandCurve::PiecewiseLinear { segments: segs };
        let w = c.total_width();
        let (d1, d2) = (f1 * w, f2 * w);
        let mid = c.utility(0.5 * (d1 + d2)).unwrap();
        let avg = 0.5 * (c.utility(d1).unwrap() + c.utility(d2).unwrap());
        prop_assert!(mid >= avg - 1e-7 * (1.0 + mid.abs()));
    }

    #[test]
    fn shedding_form_reproduces_utility(segs in segments(), fracs in prop::collection::vec(0.0..1.0f64, 3)) {
        let c = DemandCurve::PiecewiseLinear { segments: segs.clone() };
        let ls = c.to_load_shedding_form().unwrap();
        // Serve a fraction of each segment; utility = constant − shedding cost.
        let mut served_utility = 0.0;
        let mut shed_cost = 0.0;
        for (i, s) in segs.iter().enumerate() {
            let d = fracs[i % 3] * s.width;
            let g = s.width - d;
            served_utility += s.a * d - 0.5 * s.b * d * d;
            let sh = &ls.shedders[i];
            shed_cost += sh.linear_cost * g + sh.quadratic_cost * g * g;
        }
        prop_assert!((served_utility - (ls.constant - shed_cost)).abs() < 1e-6 * (1.0 + ls.constant.abs()));
        prop_assert!((ls.fixed_demand - c.total_width()).abs() < 1e-9 * (1.0 + ls.fixed_demand));
    }

    #[test]
    fn duration_curve_preserves_energy(
        v in prop::collection::vec((-100.0..3000.0f64, 0.5..4.0f64), 1..200)
    ) {
        let (prices, weights): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
        let dc = duration_curve(&prices, &weights).unwrap();
        prop_assert!(dc.values.windows(2).all(|w| w[0] >= w[1]));
        let total: f64 = prices.iter().zip(&weights).map(|(p, w)| p * w).sum();
        prop_assert!((dc.area() - total).abs() < 1e-8 * (1.0 + total.abs()));
        let hours: f64 = weights.iter().sum();
        prop_assert!((dc.cumulative_hours.last().unwrap() - hours).abs() < 1e-9 * hours);
    }

    #[test]
    fn price_shares_are_fractions(v in prop::collection::vec((0.0..3000.0f64, 0.5..4.0f64), 1..100), cut in 0.0..3000.0f64) {
        let (prices, weights): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
        let zero = price_share(&prices, &weights, PricePredicate::Zero).unwrap();
        let above = price_share(&prices, &weights, PricePredicate::Above(cut)).unwrap();
        prop_assert!((0.0..=1.0).contains(&zero));
        prop_assert!((0.0..=1.0).contains(&above));
    }

    #[test]
    fn windows_commit_every_snapshot_once(n in 1usize..2000, horizon in 1usize..200, stride_f in 0.01..1.0f64) {
        let stride = ((horizon as f64 * stride_f).ceil() as usize).clamp(1, horizon);
        let plan = window_plan(n, horizon, stride).unwrap();
        let mut next = 0;
        for w in &plan {
            prop_assert_eq!(w.start, next);
            prop_assert!(w.start < w.commit_end && w.commit_end <= w.end && w.end <= n);
            prop_assert!(w.end - w.start <= horizon);
            next = w.commit_end;
        }
        prop_assert_eq!(next, n);
    }

    #[test]
    fn bids_bracket_the_medium_value(bar in 0.0..1000.0f64, eh in 0.01..1.0f64, ef in 0.01..1.0f64) {
        let (bid, offer) = msv_heuristic_bids(bar, eh, ef).unwrap();
        prop_assert!(bid <= bar && bar <= offer);
        prop_assert!(offer - bid >= 0.0);
    }

    #[test]
    fn perturbation_scales_and_composes(c in prop::collection::vec(0.0..1e5f64, 5), f in -0.5..0.5f64, g in -0.5..0.5f64) {
        let mut caps = CapacitySet::default();
        caps.generators.insert("wind".into(), c[0]);
        caps.generators.insert("solar".into(), c[1]);
        caps.storages.insert("h".into(), StorageCapacity { charge: c[2], discharge: c[3], energy: c[4] });
        let once = caps.perturbed(f).unwrap().perturbed(g).unwrap();
        let k = (1.0 + f) * (1.0 + g);
        prop_assert!((once.generators["wind"] - c[0] * k).abs() <= 1e-9 * (1.0 + c[0]));
        prop_assert!((once.storages["h"].energy - c[4] * k).abs() <= 1e-9 * (1.0 + c[4]));
        prop_assert!(once.validate().is_ok());
    }

    #[test]
    fn weather_csv_round_trips_exactly(v in prop::collection::vec((0.0..=1.0f64, 0.0..=1.0f64), 1..100)) {
        let t0 = Utc.with_ymd_and_hms(2003, 6, 1, 0, 0, 0).unwrap();
        let table = WeatherTable {
            timestamps: (0..v.len()).map(|i| t0 + Duration::hours(i as i64)).collect(),
            onwind: v.iter().map(|x| x.0).collect(),
            solar: v.iter().map(|x| x.1).collect(),
            clipped: 0,
        };
        let mut buf = Vec::new();
        table.write(&mut buf).unwrap();
        let back = WeatherTable::from_reader(buf.as_slice()).unwrap();
        prop_assert_eq!(back, table);
    }
}
