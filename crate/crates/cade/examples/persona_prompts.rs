//! Assemble the four prompt variants for one situation and statement.
//!
//! ```bash
//! cargo run -p cade --example persona_prompts
//! ```

use std::collections::BTreeMap;

use cade::dataset::DimensionId;
use cade::persona::{build_prompt, PersonaProfile, StatementSet, Variant};

fn main() -> cade::Result<()> {
    let profile = PersonaProfile {
        age: Some(28),
        gender: Some("Female".into()),
        ethnicity: Some("African".into()),
        education: Some("College".into()),
        tipi: BTreeMap::from([
            ("open".into(), 6),
            ("conventional".into(), 3),
            ("dependable".into(), 5),
            ("disorganized".into(), 2),
            ("extraverted".into(), 4),
            ("quiet".into(), 4),
            ("sympathetic".into(), 6),
            ("critical".into(), 2),
            ("calm".into(), 5),
            ("anxious".into(), 3),
        ]),
    };

    let situation = "I finally handed in my thesis after two sleepless nights.";
    let statements = StatementSet::built_in();
    let statement = statements.get(DimensionId::Effort);

    for variant in [
        Variant::Vanilla,
        Variant::Demo,
        Variant::Traits,
        Variant::DemoTraits,
    ] {
        let bundle = build_prompt(situation, statement, Some(&profile), variant)?;
        println!("==== {variant} ====");
        println!("[system]\n{}\n", bundle.system);
        println!("[user]\n{}\n", bundle.user);
    }
    Ok(())
}
