/* tslint:disable */
/* eslint-disable */

export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    clean(): Uint8Array;
    /**
     * Restore at one α for the whole image.
     */
    denoise(alpha: number): Uint8Array;
    /**
     * Restore with α running linearly from `left` to `right` across the
     * image.
     */
    denoise_ramp(left: number, right: number): Uint8Array;
    finished(): boolean;
    /**
     * PSNR in dB of the most recent restoration.
     */
    last_psnr(): number;
    /**
     * `groups` is the FTN group count; `size` the side of the demo image.
     */
    constructor(seed: number, groups: number, size: number, phase1_steps: number, phase2_steps: number);
    noisy(): Uint8Array;
    noisy_psnr(): number;
    /**
     * 1 while learning the first level, 2 for the FTN.
     */
    phase(): number;
    /**
     * Noise level of the demo image on the 0..255 scale.
     */
    set_sigma(sigma: number): void;
    size(): number;
    status(): string;
    steps_done(): number;
    steps_total(): number;
    /**
     * Run up to `steps` training steps, moving on to the FTN once the
     * first level is finished. Returns the last batch loss.
     */
    train(steps: number): number;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly demo_clean: (a: number) => [number, number];
    readonly demo_denoise: (a: number, b: number) => [number, number, number, number];
    readonly demo_denoise_ramp: (a: number, b: number, c: number) => [number, number, number, number];
    readonly demo_finished: (a: number) => number;
    readonly demo_last_psnr: (a: number) => number;
    readonly demo_new: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
    readonly demo_noisy: (a: number) => [number, number];
    readonly demo_noisy_psnr: (a: number) => number;
    readonly demo_phase: (a: number) => number;
    readonly demo_set_sigma: (a: number, b: number) => [number, number];
    readonly demo_size: (a: number) => number;
    readonly demo_status: (a: number) => [number, number];
    readonly demo_steps_done: (a: number) => number;
    readonly demo_steps_total: (a: number) => number;
    readonly demo_train: (a: number, b: number) => [number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_table_dealloc: (a: number) => void;
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
