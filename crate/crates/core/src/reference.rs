//! Shipped reference artifacts for the colon-biopsy scenario.

use crate::dsl::{parse_policy, Policy};
use crate::schema::FieldSchema;

pub const COBIX_POLICY: &str = include_str!("../../../docs/cobix.dcp");
pub const COBIX_SCHEMA: &str = include_str!("../../../docs/cobix.schema.json");

pub fn cobix_policy() -> Policy {
    parse_policy(COBIX_POLICY).expect("shipped reference policy parses")
}

pub fn cobix_schema() -> FieldSchema {
    FieldSchema::from_json_str(COBIX_SCHEMA).expect("shipped reference schema parses")
}
