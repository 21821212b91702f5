mod common;

use common::{random_cohort, rng};
use kombine::baselines::{conventional_logrank, exponential_greenwood, greenwood};
use kombine::datacard::{parse_datacard, Datacard, ObservableType, PatientRecord, SystematicRow};
use kombine::kmcore::{InclusionVector, TimeTable};
use kombine::likelihood::multinomial_offset;
use kombine::observables::{InclusionRange, Observable, ObservableModel};
use kombine::pvalue::{AssignmentVector, Membership, PValueOptions, TwoCurveProblem};
use kombine::solver::{inner_solve, ConfidenceLevel, SolverSettings, UncertaintyMode};
use proptest::prelude::*;

fn unimodal(values: &[f64]) -> bool {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let Some(turn) = finite
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
    else {
        return true;
    };
    let tol = 1e-9;
    finite[..=turn].windows(2).all(|w| w[1] <= w[0] + tol) && finite[turn..].windows(2).all(|w| w[1] >= w[0] - tol)
}

/// With inclusions fixed the profile is unimodal. The full-mode profile is a
/// lower envelope over inclusion vectors and can have several local minima.
#[test]
fn binomial_only_profiles_are_unimodal() {
    let mut rng = rng(31);
    for _ in 0..40 {
        let cohort = random_cohort(&mut rng, 12, 4, Some(1.0));
        let p = cohort.problem(SolverSettings::default());
        for n in 0..p.table().len() {
            let values: Vec<f64> = (1..50)
                .map(|k| p.profile_scan(k as f64 / 50.0, n, UncertaintyMode::BinomialOnly).unwrap().nll)
                .collect();
            assert!(unimodal(&values), "n={n}: {values:?}");
        }
    }
}

#[test]
fn bounds_are_ordered() {
    let mut rng = rng(32);
    let levels = [ConfidenceLevel::CL68, ConfidenceLevel::CL95];
    for _ in 0..40 {
        let cohort = random_cohort(&mut rng, 12, 4, Some(1.0));
        let p = cohort.problem(SolverSettings::default());
        for mode in [UncertaintyMode::Full, UncertaintyMode::BinomialOnly, UncertaintyMode::PatientWiseOnly] {
            for point in p.confidence_band(&levels, mode) {
                let (b68, b95) = (point.interval(levels[0]).unwrap(), point.interval(levels[1]).unwrap());
                let eps = 1e-9;
                assert!(b95.lo <= b68.lo + eps && b68.hi <= b95.hi + eps, "{mode:?} {point:?}");
                assert!(b68.lo <= point.s_best + eps && point.s_best <= b68.hi + eps, "{mode:?} {point:?}");
                assert!((0.0..=1.0).contains(&b95.lo) && (0.0..=1.0).contains(&b95.hi));
            }
        }
    }
}

#[test]
fn greenwood_gap_shrinks_with_cohort_size() {
    let level = ConfidenceLevel::CL95;
    let mut previous = [f64::INFINITY; 2];
    for n in [25, 100, 400] {
        let mut rng = rng(33);
        let cohort = common::locked_cohort(common::survival_times(&mut rng, n, 0.2, None));
        let p = cohort.problem(SolverSettings::default());
        let counts = p.table().counts(p.nominal());
        let bands = [greenwood(&counts, level.value()), exponential_greenwood(&counts, level.value())];
        let likelihood = p.confidence_band(&[level], UncertaintyMode::BinomialOnly);
        let mut gaps = [0.0f64; 2];
        for (gap, band) in gaps.iter_mut().zip(&bands) {
            for point in &likelihood {
                if let Some((lo, hi)) = band.points[point.time_index].bounds {
                    let b = point.interval(level).unwrap();
                    *gap = gap.max((b.lo - lo.clamp(0.0, 1.0)).abs()).max((b.hi - hi.clamp(0.0, 1.0)).abs());
                }
            }
        }
        assert!(gaps[0] < previous[0] && gaps[1] < previous[1], "N={n}: {gaps:?} after {previous:?}");
        previous = gaps;
    }
}

#[test]
fn label_swap_inverts_hazard_ratio() {
    let mut rng = rng(34);
    for case in 0..30 {
        let cohort = common::random_two_curve(&mut rng, 16, case % 4, Some(1.0));
        let swapped_region: Vec<[f64; 3]> = cohort.region.iter().map(|c| [c[1], c[0], c[2]]).collect();
        let swapped_nominal: Vec<Membership> = cohort
            .nominal
            .iter()
            .map(|m| match m {
                Membership::Curve0 => Membership::Curve1,
                Membership::Curve1 => Membership::Curve0,
                Membership::Neither => Membership::Neither,
            })
            .collect();
        let swapped =
            TwoCurveProblem::from_region_nll(&cohort.pairs, swapped_region, AssignmentVector(swapped_nominal), 25.0)
                .unwrap();
        for use_exact in [false, true] {
            let options = PValueOptions {
                float_assignments: true,
                use_exact,
            };
            let (a, b) = (cohort.problem().likelihood_pvalue(options), swapped.likelihood_pvalue(options));
            assert!((a.statistic - b.statistic).abs() < 1e-9);
            assert!((a.p - b.p).abs() < 1e-9);
            if a.h_hat.ln().abs() < 19.0 {
                assert!((a.h_hat.ln() + b.h_hat.ln()).abs() < 1e-6, "{a:?} {b:?}");
            }
        }
    }
}

#[test]
fn identical_groups_give_unit_p() {
    let mut rng = rng(35);
    let times = common::survival_times(&mut rng, 15, 0.2, Some(1.0));
    let lr = conventional_logrank(&times, &times);
    assert!((lr.p - 1.0).abs() < 1e-12);
    let pairs: Vec<(f64, bool)> = times.iter().chain(&times).copied().collect();
    let region: Vec<[f64; 3]> = (0..pairs.len())
        .map(|k| if k < 15 { [0.0, f64::INFINITY, f64::INFINITY] } else { [f64::INFINITY, 0.0, f64::INFINITY] })
        .collect();
    let nominal = (0..pairs.len())
        .map(|k| if k < 15 { Membership::Curve0 } else { Membership::Curve1 })
        .collect();
    let problem = TwoCurveProblem::from_region_nll(&pairs, region, AssignmentVector(nominal), 25.0).unwrap();
    for use_exact in [false, true] {
        let report = problem.likelihood_pvalue(PValueOptions {
            float_assignments: false,
            use_exact,
        });
        assert!((report.h_hat - 1.0).abs() < 1e-6);
        assert!(report.p > 1.0 - 1e-6);
    }
}

#[test]
fn patient_order_does_not_matter() {
    let mut rng = rng(36);
    for _ in 0..20 {
        let cohort = random_cohort(&mut rng, 10, 4, Some(1.0));
        let mut order: Vec<usize> = (0..10).collect();
        order.reverse();
        order.swap(2, 7);
        let permuted = common::Cohort {
            pairs: order.iter().map(|&j| cohort.pairs[j]).collect(),
            penalties: order.iter().map(|&j| cohort.penalties[j]).collect(),
            nominal: InclusionVector::new(order.iter().map(|&j| cohort.nominal.get(j)).collect()),
        };
        let (a, b) = (cohort.problem(SolverSettings::default()), permuted.problem(SolverSettings::default()));
        let (ga, gb) = (a.global_minimum(UncertaintyMode::Full), b.global_minimum(UncertaintyMode::Full));
        assert!((ga.nll - gb.nll).abs() < 1e-10);
        for n in 0..a.table().len() {
            let (pa, pb) = (
                a.profile_scan(0.4, n, UncertaintyMode::Full).unwrap().nll,
                b.profile_scan(0.4, n, UncertaintyMode::Full).unwrap().nll,
            );
            assert!((pa - pb).abs() < 1e-10 || (pa.is_infinite() && pb.is_infinite()));
        }
    }
}

fn observable_strategy() -> impl Strategy<Value = ObservableModel> {
    let base = prop_oneof![
        (-5.0..5.0f64).prop_map(|value| Observable::Fixed { value }),
        (0u64..60).prop_map(|count| Observable::Poisson { count }),
        (0u64..60, 0.1..10.0f64).prop_map(|(count, area)| Observable::PoissonDensity { count, area }),
        (0u64..60, 1u64..120).prop_map(|(num, denom)| Observable::PoissonRatio { num, denom }),
    ];
    (base, proptest::collection::vec(0.0..0.8f64, 0..3))
        .prop_map(|(observable, systematics)| ObservableModel::new(observable, systematics).unwrap())
}

fn range_strategy() -> impl Strategy<Value = InclusionRange> {
    prop_oneof![
        (-2.0..20.0f64).prop_map(InclusionRange::at_least),
        (-2.0..20.0f64).prop_map(InclusionRange::below),
        (-2.0..20.0f64, 0.01..10.0f64).prop_map(|(lo, w)| InclusionRange::new(lo, lo + w).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn penalty_sign_matches_nominal_inclusion(model in observable_strategy(), range in range_strategy()) {
        let pair = model.penalty(&range);
        let delta = pair.delta();
        if range.contains(model.nominal_value()) {
            prop_assert!(delta <= 1e-12, "{pair:?}");
        } else {
            prop_assert!(delta >= -1e-12, "{pair:?}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn boundary_minimum_is_unimodal(model in observable_strategy()) {
        let nominal = model.nominal_value();
        let span = nominal.abs().max(1.0);
        let above: Vec<f64> = (0..40).map(|k| model.boundary_minimum(nominal + span * k as f64 / 20.0)).collect();
        let below: Vec<f64> = (0..40).map(|k| model.boundary_minimum(nominal - span * k as f64 / 20.0)).collect();
        for side in [&above, &below] {
            prop_assert!(side.windows(2).all(|w| w[1] >= w[0] - 1e-9 || w[1].is_nan()), "{model:?} {side:?}");
        }
    }

    #[test]
    fn zero_width_systematic_changes_nothing(model in observable_strategy(), range in range_strategy()) {
        let widened = model.clone().with_systematic(0.0).unwrap();
        let (a, b) = (model.penalty(&range), widened.penalty(&range));
        let same = |x: f64, y: f64| x == y || (x - y).abs() < 1e-9;
        prop_assert!(same(a.nll_in, b.nll_in) && same(a.nll_out, b.nll_out));
    }

    /// Consecutive times without censoring give the same constrained
    /// minimum as one merged group plus the multinomial offset.
    #[test]
    fn collapsed_group_matches_separate_times(
        deaths in proptest::collection::vec(0u32..4, 1..5),
        survivors in 0u32..8,
        s in 0.02..0.98f64,
    ) {
        let total: u32 = deaths.iter().sum();
        let mut r = Vec::new();
        let mut left = total + survivors;
        for &d in &deaths {
            r.push(left);
            left -= d;
        }
        if r[0] > 0 {
            let separate = inner_solve(&r, &deaths, s).unwrap().nll;
            let merged = inner_solve(&[r[0]], &[total], s).unwrap().nll + multinomial_offset(&deaths);
            prop_assert!((separate - merged).abs() < 1e-9 || (separate.is_infinite() && merged.is_infinite()),
                "{separate} vs {merged}");
        }
    }

    /// Deaths, included censored patients and patients still at risk after
    /// the last event time account for every included patient.
    #[test]
    fn counts_conserve_patients(
        patients in proptest::collection::vec((1u32..8, any::<bool>(), any::<bool>()), 1..25),
    ) {
        let pairs: Vec<(f64, bool)> = patients.iter().map(|&(t, c, _)| (t as f64, c)).collect();
        let a = InclusionVector::new(patients.iter().map(|p| p.2).collect());
        let table = TimeTable::from_times(&pairs, &InclusionVector::all(pairs.len()));
        let counts = table.counts(&a);
        let last = table.times().last().copied().unwrap_or(f64::NEG_INFINITY);
        let deaths: u32 = counts.deaths.iter().sum();
        let censored = patients.iter().filter(|p| p.2 && p.1).count() as u32;
        let beyond = patients.iter().filter(|p| p.2 && !p.1 && p.0 as f64 > last).count() as u32;
        prop_assert_eq!(deaths + censored + beyond, a.count() as u32);
    }

    #[test]
    fn nominal_curve_steps_down_from_one(
        patients in proptest::collection::vec((1u32..12, any::<bool>()), 1..30),
    ) {
        let pairs: Vec<(f64, bool)> = patients.iter().map(|&(t, c)| (t as f64, c)).collect();
        let all = InclusionVector::all(pairs.len());
        let curve = kombine::kmcore::nominal_curve(&TimeTable::from_times(&pairs, &all), &all);
        let mut previous = 1.0;
        for (_, s) in curve {
            prop_assert!(s <= previous && s >= 0.0);
            previous = s;
        }
    }

    #[test]
    fn logrank_ignores_time_units(
        g0 in proptest::collection::vec((1u32..20, any::<bool>()), 1..20),
        g1 in proptest::collection::vec((1u32..20, any::<bool>()), 1..20),
        scale in 0.01..100.0f64,
    ) {
        let to_obs = |g: &[(u32, bool)], k: f64| g.iter().map(|&(t, c)| (t as f64 * k, c)).collect::<Vec<_>>();
        let (a, b) = (conventional_logrank(&to_obs(&g0, 1.0), &to_obs(&g1, 1.0)), conventional_logrank(&to_obs(&g0, scale), &to_obs(&g1, scale)));
        prop_assert!((a.q - b.q).abs() <= 1e-9 * a.q.max(1.0) && (a.p - b.p).abs() < 1e-12);
    }

    #[test]
    fn datacard_round_trip(
        kind in 0usize..4,
        rows in proptest::collection::vec((0.5..50.0f64, any::<bool>(), 0u64..200, 1u64..200, 0.1..9.0f64), 1..15),
        with_systematic in any::<bool>(),
    ) {
        let observable_type = [ObservableType::Fixed, ObservableType::Poisson, ObservableType::PoissonDensity, ObservableType::PoissonRatio][kind];
        let sigma: Vec<f64> = rows.iter().map(|r| (r.4 / 30.0 * 1000.0).round() / 1000.0).collect();
        let patients = rows
            .iter()
            .zip(&sigma)
            .map(|(&(t, censored, a, b, x), &sig)| {
                let t = (t * 100.0).round() / 100.0;
                let observable = match observable_type {
                    ObservableType::Fixed => Observable::Fixed { value: (x * 10.0).round() / 10.0 },
                    ObservableType::Poisson => Observable::Poisson { count: a },
                    ObservableType::PoissonDensity => Observable::PoissonDensity { count: a, area: (x * 10.0).round() / 10.0 },
                    ObservableType::PoissonRatio => Observable::PoissonRatio { num: a, denom: b },
                };
                let systematics = if with_systematic { vec![sig] } else { Vec::new() };
                PatientRecord { survival_time: t, censored, observable: ObservableModel::new(observable, systematics).unwrap() }
            })
            .collect();
        let systematics = if with_systematic { vec![SystematicRow { name: "scale".into(), sigma }] } else { Vec::new() };
        let card = Datacard { observable_type, patients, systematics };
        let reparsed = parse_datacard(&card.to_text()).unwrap();
        prop_assert_eq!(reparsed, card);
    }
}
