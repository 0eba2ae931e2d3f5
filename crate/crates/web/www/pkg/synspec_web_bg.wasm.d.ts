/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demo_free: (a: number, b: number) => void;
export const __wbg_get_verdict_class_id: (a: number) => number;
export const __wbg_get_verdict_lag: (a: number) => number;
export const __wbg_get_verdict_runner_up: (a: number) => number;
export const __wbg_get_verdict_runner_up_similarity: (a: number) => number;
export const __wbg_get_verdict_similarity: (a: number) => number;
export const __wbg_get_verdict_tie: (a: number) => number;
export const __wbg_set_verdict_class_id: (a: number, b: number) => void;
export const __wbg_set_verdict_lag: (a: number, b: number) => void;
export const __wbg_set_verdict_runner_up: (a: number, b: number) => void;
export const __wbg_set_verdict_runner_up_similarity: (a: number, b: number) => void;
export const __wbg_set_verdict_similarity: (a: number, b: number) => void;
export const __wbg_set_verdict_tie: (a: number, b: number) => void;
export const __wbg_verdict_free: (a: number, b: number) => void;
export const demo_alter: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const demo_classify: (a: number, b: number, c: number) => [number, number, number];
export const demo_ideal: (a: number, b: number) => [number, number, number, number];
export const demo_n_classes: (a: number) => number;
export const demo_n_datapoints: (a: number) => number;
export const demo_new: (a: bigint) => [number, number, number];
export const demo_peak_positions: (a: number, b: number) => [number, number, number, number];
export const demo_test_grid: (a: number, b: number) => [number, number, number, number];
export const demo_training_variants: (a: number, b: number, c: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_start: () => void;
