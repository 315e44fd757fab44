use ess_bilevel::instance::{LoadSet, PriceSeries, StorageParams, TimeGrid, Weights};
use ess_bilevel::scenario::{build_instance, generate, Config, LoadProfile, PriceShape};
use ess_bilevel::Instance;
use rand::Rng;

#[derive(Debug, Clone, Copy)]
pub struct Fixture {
    pub profile: LoadProfile,
    pub shape: PriceShape,
    pub customers: usize,
    pub slots: usize,
    pub seed: u64,
    pub capacity: f64,
}

impl Fixture {
    pub fn instance(&self) -> Instance {
        let day = generate(self.profile, self.shape, self.customers, self.slots, self.seed).unwrap();
        let config = Config {
            total_capacity: Some(self.capacity),
            ..Config::default()
        };
        build_instance(day.customer_load, day.prices, &config).unwrap().instance
    }

    pub fn label(&self) -> String {
        format!(
            "{:?}/{:?} N={} T={} seed={} S={}",
            self.profile, self.shape, self.customers, self.slots, self.seed, self.capacity
        )
    }
}

const fn fixture(profile: LoadProfile, shape: PriceShape, customers: usize, slots: usize, seed: u64, capacity: f64) -> Fixture {
    Fixture {
        profile,
        shape,
        customers,
        slots,
        seed,
        capacity,
    }
}

use LoadProfile::{Duck, Mixed, Typical};
use PriceShape::{Conflicting, Conforming};

/// Small instances whose optimal division lies on the grid with step
/// `capacity / 20`, so the grid search can certify the solvers exactly.
/// The optimum goes to the DisCo, to one customer, or to nobody.
pub const AGREEMENT: [Fixture; 14] = [
    fixture(Duck, Conforming, 1, 4, 0, 4.0),
    fixture(Duck, Conforming, 1, 6, 1, 4.0),
    fixture(Duck, Conforming, 2, 4, 0, 16.0),
    fixture(Duck, Conforming, 2, 6, 0, 8.0),
    fixture(Typical, Conforming, 1, 6, 0, 4.0),
    fixture(Typical, Conforming, 1, 6, 0, 8.0),
    fixture(Typical, Conforming, 2, 4, 1, 8.0),
    fixture(Mixed, Conforming, 2, 4, 0, 8.0),
    fixture(Mixed, Conforming, 2, 4, 1, 16.0),
    fixture(Mixed, Conforming, 1, 6, 0, 8.0),
    fixture(Duck, Conflicting, 2, 6, 0, 16.0),
    fixture(Typical, Conflicting, 1, 4, 0, 4.0),
    fixture(Mixed, Conflicting, 2, 4, 1, 8.0),
    fixture(Mixed, Conflicting, 2, 6, 0, 8.0),
];

/// Instances whose optimum is off the grid: the grid can only be worse.
pub const OFF_GRID: [Fixture; 3] = [
    fixture(Duck, Conforming, 1, 6, 1, 8.0),
    fixture(Mixed, Conforming, 1, 6, 1, 8.0),
    fixture(Mixed, Conforming, 2, 4, 0, 16.0),
];

/// Conflicting wholesale and retail prices, 8 kWh per household.
pub const CONFLICTING_DAY: Fixture = fixture(Mixed, Conflicting, 2, 24, 0, 16.0);

/// Largest instance the complementarity branching must handle quickly.
pub const STRESS: Fixture = fixture(Mixed, Conflicting, 2, 12, 0, 16.0);

/// 100 households sharing 800 kWh over 48 half-hour slots.
pub fn full_scale() -> Instance {
    let day = generate(Duck, Conforming, 100, 48, 0).unwrap();
    let config = Config {
        total_capacity: Some(800.0),
        eta_ch: Some(0.92),
        eta_dis: Some(0.92),
        power_ratio: Some(0.25),
        lambda1: Some(0.8),
        lambda2: Some(6.69),
        lambda3: Some(1.0),
        ..Config::default()
    };
    build_instance(day.customer_load, day.prices, &config).unwrap().instance
}

/// Random instance with arbitrary prices (possibly negative wholesale),
/// storage parameters and weights.
pub fn random_instance(rng: &mut impl Rng, customers: usize, slots: usize, capacity: f64) -> Instance {
    let loads: Vec<Vec<f64>> = (0..customers)
        .map(|_| (0..slots).map(|_| rng.random_range(0.0..5.0)).collect())
        .collect();
    let lmp = (0..slots).map(|_| rng.random_range(-0.05..0.4)).collect();
    let tou = (0..slots).map(|_| [0.12, 0.18, 0.30][rng.random_range(0..3)]).collect();
    let soc_lower = rng.random_range(0.0..0.3);
    let soc_upper = rng.random_range(0.7..1.0);
    let mut storage = StorageParams::new(capacity, rng.random_range(0.8..=1.0), rng.random_range(0.1..0.6), customers);
    storage.eta_dis = rng.random_range(0.8..=1.0);
    storage.soc_lower = soc_lower;
    storage.soc_upper = soc_upper;
    storage.soc_ini_customer = (0..customers).map(|_| rng.random_range(soc_lower..=soc_upper)).collect();
    storage.soc_ini_disco = rng.random_range(soc_lower..=soc_upper);
    let weights = Weights {
        lambda1: rng.random_range(0.1..2.0),
        lambda2: rng.random_range(0.0..10.0),
        lambda3: rng.random_range(0.0..2.0),
        alpha: rng.random_range(0.0..0.05),
    };
    Instance::new(
        TimeGrid::day(slots).unwrap(),
        PriceSeries { lmp, tou },
        LoadSet::new(loads, None),
        storage,
        weights,
    )
    .unwrap()
}
