pub mod clock;
pub mod condition;
pub mod decimal;
pub mod engine;
pub mod escalation;
pub mod ledger;
pub mod mediator;
pub mod pack;
pub mod policy;
pub mod rubric;
pub mod simulator;
pub mod trajectory;
pub mod value;
