//! Library side of the `talkplay` command line: file formats and pipeline
//! steps that the commands and the end-to-end checks share.

pub mod corpus;
pub mod pipeline;
