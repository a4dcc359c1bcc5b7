//! Shared test fixtures: fitted surrogates are expensive to rebuild, so
//! tests share one instance per variant.

use std::sync::OnceLock;

use crate::plant::PlantConstants;
use crate::runtime::prep::prepare_original_net;
use crate::seed::SeedTree;
use crate::surrogate::SurrogateNet;

pub fn consts() -> &'static PlantConstants {
    static C: OnceLock<PlantConstants> = OnceLock::new();
    C.get_or_init(PlantConstants::default)
}

pub fn original_net() -> &'static SurrogateNet {
    static NET: OnceLock<SurrogateNet> = OnceLock::new();
    NET.get_or_init(|| {
        prepare_original_net(consts(), &SeedTree::new(1234), 36)
            .expect("fixture fit")
            .0
    })
}


