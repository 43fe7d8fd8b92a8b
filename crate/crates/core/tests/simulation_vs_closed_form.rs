use aoi_core::analytics::{
    aoi_breakdown, processing_queue_wait, transmission_wait_exact, Formulas, ProcessingWaitForm,
};
use aoi_core::channel::ChannelParams;
use aoi_core::des::{run, Horizon, SimConfig};
use aoi_core::model::{Source, SystemModel};
use aoi_core::quadrature::QuadratureSettings;
use aoi_core::seed;
use aoi_core::units::dbm_to_watts;

fn scenario(rates: &[f64], edge_rate: f64) -> SystemModel {
    let noise = dbm_to_watts(-174.0) * 100e3;
    let up = ChannelParams::new(100e3, 1.0, noise, 3000.0, 3.0).unwrap();
    let down = ChannelParams::new(100e3, 1.0, noise, 10_000.0, 3.0).unwrap();
    SystemModel {
        sources: rates
            .iter()
            .map(|&r| Source { arrival_rate: r, packet_bits: 10_000.0, uplink: up })
            .collect(),
        edge_rate,
        fog_rate: 15.0,
        downlink: down,
        processed_ratio: 0.2,
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn moderate_load_waits_and_ages() {
    let quad = QuadratureSettings::default();
    let m = scenario(&[2.0, 2.0], 8.0);
    let sim = run(&m, &SimConfig::new(Horizon::Packets(300_000)), seed::rng(11)).unwrap();
    let breakdown = aoi_breakdown(&m, &quad, Formulas::default()).unwrap();
    let pk = transmission_wait_exact(&m, &quad).unwrap();
    for (j, s) in sim.sources.iter().enumerate() {
        let w = processing_queue_wait(&m, j, ProcessingWaitForm::Fcfs).unwrap();
        assert!(rel(s.processing_wait, w) < 0.05, "processing {} vs {w}", s.processing_wait);
        assert!(rel(s.uplink_wait, pk) < 0.08, "uplink {} vs {pk}", s.uplink_wait);
        assert!(rel(s.time_average_age, breakdown.sources[j].total) < 0.05);
    }
    assert!(sim.uplink_queue.littles_law_error() < 1e-9);
    assert_eq!(sim.conservation_violations, 0);
}

#[test]
fn exponential_queue_matches_textbook_age() {
    let m = scenario(&[0.4], 1.0);
    let sim = run(&m, &SimConfig::queue_only(Horizon::Packets(400_000)), seed::rng(3)).unwrap();
    let rho: f64 = 0.4;
    let oracle = 1.0 + 1.0 / rho + rho * rho / (1.0 - rho);
    assert!(rel(sim.mean_age(), oracle) < 0.02, "{} vs {oracle}", sim.mean_age());
}

#[test]
fn replications_differ_but_agree() {
    let m = scenario(&[1.0, 1.0], 30.0);
    let cfg = SimConfig::new(Horizon::Packets(100_000));
    let a = run(&m, &cfg, seed::rng(1)).unwrap();
    let b = run(&m, &cfg, seed::rng(2)).unwrap();
    assert_ne!(a.mean_age(), b.mean_age());
    assert!(rel(a.mean_age(), b.mean_age()) < 0.02);
}
