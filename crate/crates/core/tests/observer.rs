use sensorcast::channel::ChannelMode;
use sensorcast::kernel::Time;
use sensorcast::metrics::{Sample, ViewTable};
use sensorcast::protocol::Packet;
use sensorcast::scenario::Placement;
use sensorcast::topology::{Area, Position};
use sensorcast::{Scenario, Simulation, TraceSink};

#[test]
fn unstaggered_reports_fall_on_the_rate_grid() {
    let s = Scenario {
        report_rate: 5.0,
        staggered_reports: false,
        node_count: 9,
        area: Area::new(240.0, 240.0),
        duration: 3.0,
        ..Scenario::default()
    };
    let sim = Simulation::new(&s, 4).unwrap();
    for node in 0..9 {
        for k in 0..15 {
            assert!((sim.report_time(node, k) - k as f64 * 0.2).abs() < 1e-12);
        }
    }

    struct Gen(Vec<(Time, usize, u64)>);
    impl TraceSink for Gen {
        fn on_generate(&mut self, t: Time, p: &Packet) {
            self.0.push((t, p.source, p.seq));
        }
    }
    let mut g = Gen(Vec::new());
    Simulation::new(&s, 4).unwrap().run_with(&mut g).unwrap();
    assert_eq!(g.0.len(), 9 * 16);
    for (t, _, seq) in g.0 {
        assert!((t - seq as f64 * 0.2).abs() < 1e-12, "{t} {seq}");
    }
}

#[test]
fn staggered_reports_share_one_phase_per_node() {
    let s = Scenario {
        report_rate: 2.0,
        node_count: 16,
        area: Area::new(320.0, 320.0),
        duration: 3.0,
        ..Scenario::default()
    };
    let sim = Simulation::new(&s, 8).unwrap();
    let phases: Vec<f64> = (0..16).map(|n| sim.report_time(n, 0)).collect();
    assert!(phases.iter().all(|p| (0.0..0.5).contains(p)));
    assert!(phases.windows(2).any(|w| w[0] != w[1]));
    for n in 0..16 {
        assert!((sim.report_time(n, 4) - phases[n] - 2.0).abs() < 1e-12);
    }
}

const LINE: [f64; 5] = [50.0, 130.0, 210.0, 290.0, 370.0];
const INCREMENT: f64 = 10.0;

struct Staleness {
    airtime: f64,
    rate: f64,
    positions: Vec<Position>,
    last_gen: Vec<Option<Time>>,
    checked: usize,
    lagging: usize,
}

impl TraceSink for Staleness {
    fn on_generate(&mut self, t: Time, p: &Packet) {
        self.last_gen[p.source] = Some(t);
    }

    fn on_sample(&mut self, sample: &Sample, views: &ViewTable, _positions: &[Position]) {
        for i in 0..5usize {
            for j in (0..5).filter(|&j| j != i) {
                let hops = i.abs_diff(j) as f64;
                let transit = hops * self.airtime * (1.0 + 1e-9);
                let Some(generated) = self.last_gen[j] else { continue };
                let Some(view) = views.get(i, j) else {
                    assert!(sample.t - generated <= transit, "pair {i},{j} has no view at {}", sample.t);
                    continue;
                };
                let truth = views.truth(j).unwrap();
                let err = (view.value - truth).abs();
                let bound = INCREMENT * (hops * self.airtime + 1.0 / self.rate);
                assert!(err <= bound + 1e-9, "pair {i},{j} at {}: {err} > {bound}", sample.t);
                if sample.t - generated > transit {
                    assert_eq!(err, 0.0, "pair {i},{j} at {}", sample.t);
                } else {
                    self.lagging += 1;
                }
                assert_eq!(self.positions[i].distance(&self.positions[j]), hops * 80.0);
                self.checked += 1;
            }
        }
    }
}

#[test]
fn ideal_flooding_views_lag_by_at_most_the_path_delay() {
    for (seed, rate) in [(1, 0.5), (2, 1.0), (3, 2.0)] {
        let s = Scenario {
            placement: Placement::Random,
            channel: ChannelMode::Ideal,
            report_rate: rate,
            node_count: 5,
            area: Area::new(420.0, 100.0),
            duration: 60.0,
            ..Scenario::default()
        };
        let positions: Vec<Position> = LINE.iter().map(|&x| Position::new(x, 50.0)).collect();
        let mut sim = Simulation::with_positions(&s, seed, positions.clone()).unwrap();
        sim.set_linear_initial(vec![0.0, 10.0, 20.0, 30.0, 40.0]).unwrap();
        let mut probe = Staleness {
            airtime: s.radio.packet_bits as f64 / s.radio.bandwidth,
            rate,
            positions,
            last_gen: vec![None; 5],
            checked: 0,
            lagging: 0,
        };
        sim.run_with(&mut probe).unwrap();
        assert!(probe.checked > 50 * 20);
        assert!(probe.lagging * 100 < probe.checked);
    }
}

#[test]
fn positions_outside_the_field_are_rejected() {
    let s = Scenario {
        placement: Placement::Random,
        node_count: 2,
        area: Area::new(100.0, 100.0),
        ..Scenario::default()
    };
    let bad = vec![Position::new(10.0, 10.0), Position::new(150.0, 10.0)];
    assert!(Simulation::with_positions(&s, 1, bad).is_err());
    let short = vec![Position::new(10.0, 10.0)];
    assert!(Simulation::with_positions(&s, 1, short).is_err());
}
