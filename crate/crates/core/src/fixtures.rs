//! Bundled example programs and evidence.

pub const COIN: &str = include_str!("../fixtures/coin.lpmln");
pub const COIN_EVIDENCE: &str = include_str!("../fixtures/coin.evid");
pub const VIRUS: &str = include_str!("../fixtures/virus.lpmln");
pub const VIRUS_LEARNED: &str = include_str!("../fixtures/virus_learned.lpmln");
pub const VIRUS_EVIDENCE: &str = include_str!("../fixtures/virus.evid");
pub const ROBOT: &str = include_str!("../fixtures/robot.lpmln");
pub const ROBOT_EVIDENCE: &str = include_str!("../fixtures/robot.evid");
pub const NETWORK: &str = include_str!("../fixtures/network.lpmln");
pub const NETWORK_EVIDENCE: &str = include_str!("../fixtures/network.evid");

/// A named program with its training data.
#[derive(Clone, Copy, Debug)]
pub struct Fixture {
    pub name: &'static str,
    pub program: &'static str,
    pub evidence: &'static str,
}

pub const ALL: [Fixture; 4] = [
    Fixture { name: "coin", program: COIN, evidence: COIN_EVIDENCE },
    Fixture { name: "virus", program: VIRUS, evidence: VIRUS_EVIDENCE },
    Fixture { name: "robot", program: ROBOT, evidence: ROBOT_EVIDENCE },
    Fixture { name: "network", program: NETWORK, evidence: NETWORK_EVIDENCE },
];

pub fn by_name(name: &str) -> Option<Fixture> {
    ALL.iter().copied().find(|f| f.name == name)
}
