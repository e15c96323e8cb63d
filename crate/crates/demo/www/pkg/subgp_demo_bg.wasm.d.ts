/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_ensemble1d_free: (a: number, b: number) => void;
export const ensemble1d_curves: (a: number, b: number) => [number, number, number, number];
export const ensemble1d_new: (a: number, b: number, c: number, d: bigint) => [number, number, number];
export const ensemble1d_predictive: (a: number, b: number, c: number) => [number, number, number, number];
export const ensemble1d_size: (a: number) => number;
export const partitionDemo: (a: number, b: number, c: number, d: bigint) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
