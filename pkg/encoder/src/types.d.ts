// Ambient declarations for dependencies that ship no types here:
// @huggingface/transformers is an optional runtime dependency loaded
// dynamically, and yargs is consumed untyped.
declare module "@huggingface/transformers";
declare module "yargs";
declare module "yargs/helpers";
