use edfq::predict::{fraction_late_work_standard, PredictionInputs};
use edfq::primitives::{from_trace, generate_stream, DistributionSpec, LeadTimeSpec, StreamBound, StreamSpec};
use edfq::reference::{compare_systems, direct_reference_dynamics, phi_map, reference_discrepancy};
use edfq::scalar::{ratio, Exact};
use edfq::simulator::{simulate, PolicySpec};
use edfq::EPS_MASS;

fn spec() -> StreamSpec {
    StreamSpec {
        interarrival: DistributionSpec::exponential(1.0).unwrap(),
        service: DistributionSpec::exponential(1.1).unwrap(),
        lead: LeadTimeSpec::new(DistributionSpec::uniform(0.5, 6.0).unwrap()).unwrap(),
    }
}

#[test]
fn random_stream_through_reference() {
    let s = spec();
    let stream = generate_stream(5, s, StreamBound::Count(300)).unwrap();
    let horizon = stream.last().unwrap().arrival + 50.0;
    let std_traj = simulate(&stream, &PolicySpec::EdfStandard, horizon, s.lead.y_hi()).unwrap();
    let ren = simulate(&stream, &PolicySpec::EdfReneging, horizon, s.lead.y_hi()).unwrap();
    let phi = phi_map(&std_traj).unwrap();
    let direct = direct_reference_dynamics(&stream, &std_traj, horizon).unwrap();
    assert!(reference_discrepancy(&phi, &direct).max() <= EPS_MASS);
    let report = compare_systems(&ren, &phi, EPS_MASS).unwrap();
    assert!(report.checks.iter().all(|(_, v)| *v <= EPS_MASS), "{:?}", report.checks);
}

#[test]
fn same_seed_same_stream() {
    let a = generate_stream(9, spec(), StreamBound::Count(50)).unwrap();
    let b = generate_stream(9, spec(), StreamBound::Count(50)).unwrap();
    let c = generate_stream(10, spec(), StreamBound::Count(50)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn exact_single_customer_reneges_at_deadline() {
    let q = |n| ratio(n, 1);
    let stream = from_trace(&[q(1)], &[q(5)], &[q(2)]).unwrap();
    let ren = simulate(&stream, &PolicySpec::EdfReneging, q(10), q(2)).unwrap();
    let end = ren.at(&q(10));
    assert_eq!(end.workload.as_ref().unwrap().atoms().count(), 0);
    let lost: Exact = end.reneged_work.clone();
    assert_eq!(lost, q(3));
}

#[test]
fn prediction_from_primitives() {
    let s = StreamSpec {
        interarrival: DistributionSpec::exponential(0.5).unwrap(),
        service: DistributionSpec::exponential(1.0 / 1.96).unwrap(),
        lead: LeadTimeSpec::new(DistributionSpec::uniform(5.0, 200.0).unwrap()).unwrap(),
    };
    let inp = PredictionInputs::from_primitives(&s.interarrival, &s.service, &s.lead).unwrap();
    let late = fraction_late_work_standard(&inp);
    assert!((late - (-inp.theta * inp.mean_lead).exp()).abs() < 1e-12);
}
