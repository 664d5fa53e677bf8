/* tslint:disable */
/* eslint-disable */

export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    clear_roi(): Uint8Array;
    /**
     * Replaces the working image with the enhanced original.
     */
    enhance(clip: number, t_bg: number): Uint8Array;
    /**
     * Runs `"occlusion"` or `"rise"`; `gated` uses the current ROI.
     */
    explain(method: string, gated: boolean, samples: number, seed: number): Explanation;
    /**
     * Current working image as RGBA.
     */
    image_rgba(): Uint8Array;
    constructor(size: number, seed: number);
    reset(): Uint8Array;
    roi_pixels(): number;
    /**
     * Thresholds smoothed brightness and grows the result by `margin`
     * pixels. Returns the image with the ROI tinted.
     */
    set_roi(threshold: number, margin: number): Uint8Array;
    size(): number;
}

/**
 * Result of one explanation run.
 */
export class Explanation {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    calls(): number;
    report_json(): string;
    /**
     * Colormapped heatmap as RGBA bytes.
     */
    rgba(): Uint8Array;
    rho(): number;
    wall_clock_ms(): number;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly __wbg_explanation_free: (a: number, b: number) => void;
    readonly demo_clear_roi: (a: number) => [number, number];
    readonly demo_enhance: (a: number, b: number, c: number) => [number, number, number, number];
    readonly demo_explain: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
    readonly demo_image_rgba: (a: number) => [number, number];
    readonly demo_new: (a: number, b: number) => number;
    readonly demo_reset: (a: number) => [number, number];
    readonly demo_roi_pixels: (a: number) => number;
    readonly demo_set_roi: (a: number, b: number, c: number) => [number, number, number, number];
    readonly demo_size: (a: number) => number;
    readonly explanation_calls: (a: number) => number;
    readonly explanation_report_json: (a: number) => [number, number];
    readonly explanation_rgba: (a: number) => [number, number];
    readonly explanation_rho: (a: number) => number;
    readonly explanation_wall_clock_ms: (a: number) => number;
    readonly __externref_table_alloc: () => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
