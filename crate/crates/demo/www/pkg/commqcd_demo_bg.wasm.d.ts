/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_tracedata_free: (a: number, b: number) => void;
export const binaryRegion: (a: number, b: number, c: number) => [number, number, number, number];
export const mimoRegion: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
export const scsTrace: (a: number, b: number, c: number, d: number, e: number, f: number, g: bigint) => [number, number, number];
export const tracedata_points: (a: number) => [number, number];
export const tracedata_stop: (a: number) => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_start: () => void;
