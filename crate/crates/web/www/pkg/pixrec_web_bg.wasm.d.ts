/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_resampledemo_free: (a: number, b: number) => void;
export const mask_pattern: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const resampledemo_bicubic: (a: number) => [number, number];
export const resampledemo_consistency_bicubic: (a: number) => number;
export const resampledemo_consistency_nearest: (a: number) => number;
export const resampledemo_consistency_truth: (a: number) => number;
export const resampledemo_high: (a: number) => [number, number];
export const resampledemo_low: (a: number) => [number, number];
export const resampledemo_low_size: (a: number) => number;
export const resampledemo_nearest: (a: number) => [number, number];
export const resampledemo_new: (a: number, b: bigint, c: number, d: number, e: number) => [number, number, number];
export const resampledemo_size: (a: number) => number;
export const sample_counts: (a: number, b: number, c: number, d: bigint, e: number) => [number, number, number, number];
export const tempered: (a: number, b: number, c: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_start: () => void;
