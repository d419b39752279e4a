/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_toydemo_free: (a: number, b: number) => void;
export const decode_action: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const encode_delta: (a: number, b: number) => [number, number, number, number];
export const mask_grid: (a: number, b: number, c: number) => [number, number, number, number];
export const toydemo_metrics: (a: number) => [number, number];
export const toydemo_new: (a: number, b: number, c: bigint) => [number, number, number];
export const toydemo_paths: (a: number, b: number, c: number, d: number, e: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
