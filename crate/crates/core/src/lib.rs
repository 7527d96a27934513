//! Data side of the laboratory: artificial-language generation
//! ([`langgen`]), corpus statistics ([`corpstats`]) and natural-language
//! ingestion ([`corpusio`]).

pub mod corpstats;
pub mod corpusio;
pub mod langgen;
