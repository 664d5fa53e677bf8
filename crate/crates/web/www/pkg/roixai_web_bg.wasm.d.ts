/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demo_free: (a: number, b: number) => void;
export const __wbg_explanation_free: (a: number, b: number) => void;
export const demo_clear_roi: (a: number) => [number, number];
export const demo_enhance: (a: number, b: number, c: number) => [number, number, number, number];
export const demo_explain: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
export const demo_image_rgba: (a: number) => [number, number];
export const demo_new: (a: number, b: number) => number;
export const demo_reset: (a: number) => [number, number];
export const demo_roi_pixels: (a: number) => number;
export const demo_set_roi: (a: number, b: number, c: number) => [number, number, number, number];
export const demo_size: (a: number) => number;
export const explanation_calls: (a: number) => number;
export const explanation_report_json: (a: number) => [number, number];
export const explanation_rgba: (a: number) => [number, number];
export const explanation_rho: (a: number) => number;
export const explanation_wall_clock_ms: (a: number) => number;
export const __externref_table_alloc: () => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_start: () => void;
