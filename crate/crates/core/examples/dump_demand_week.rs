//! Regenerate the shipped demonstration demand-week CSV.

use gasnet_core::report::write_profile_csv;
use gasnet_core::scenario::synthetic_week;
use gasnet_core::units::DAY_S;

fn main() {
    let profile = synthetic_week(7, 93.0, 0.30, 12.0, 0.0, 1.0, 1800.0, 7.0 * DAY_S).unwrap();
    write_profile_csv("data/profiles/demand_week_node7.csv", &profile).unwrap();
    println!("wrote data/profiles/demand_week_node7.csv ({} samples)", profile.times().len());
}
