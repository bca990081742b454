/**
 * Patient enrollment wizard: one page per case report form, in the order
 * the server's schema endpoint lists them, then a review page and the
 * final submission. Page structure and required-field gating come from
 * GET /api/v1/schemas, so the client never duplicates schema constants;
 * completion statuses shown are the server's, taken from save responses.
 */

import {
    AccountInfo,
    ApiClient,
    ApiError,
    FieldSpec,
    FormSchemas,
    PatientRecord,
    newIdempotencyKey,
} from '../api.js';
import { clear, h } from '../dom.js';

interface WizardState {
    record: PatientRecord;
    schemas: FormSchemas;
    formOrder: string[];
    page: number; // index into formOrder; formOrder.length == review page
    submitKey: string;
    submitting: boolean;
}

function fieldInput(spec: FieldSpec, current: unknown): HTMLElement {
    const value = current === null || current === undefined ? '' : String(current);
    if (spec.type === 'enum') {
        const select = h('select', { name: spec.name }, h('option', { value: '' }, 'Select...'));
        for (const option of spec.values) {
            const attrs: Record<string, string | boolean> = { value: option };
            if (option === value) attrs['selected'] = true;
            select.append(h('option', attrs, option));
        }
        return select;
    }
    const attrs: Record<string, string> = { name: spec.name, type: 'text', value };
    if (spec.type === 'date') attrs['placeholder'] = 'YYYY-MM-DD';
    if (spec.type === 'integer' || spec.type === 'decimal') attrs['inputmode'] = 'decimal';
    return h('input', attrs);
}

function parseValue(spec: FieldSpec, raw: string): unknown {
    const trimmed = raw.trim();
    if (trimmed === '') return null;
    if (spec.type === 'integer') {
        const n = Number(trimmed);
        return Number.isInteger(n) ? n : trimmed; // let the server name the error
    }
    if (spec.type === 'decimal') {
        const n = Number(trimmed);
        return Number.isNaN(n) ? trimmed : n;
    }
    return trimmed;
}

export function renderWizard(
    container: HTMLElement,
    api: ApiClient,
    account: AccountInfo,
    onLoggedOut: () => void,
): void {
    clear(container);
    if (!account.patient_id) {
        container.append(h('p', {}, 'This account has no enrollment record.'));
        return;
    }
    const root = h('div', { 'data-view': 'wizard' });
    container.append(root);

    const load = Promise.all([api.getPatient(account.patient_id), api.formSchemas()]);
    void load
        .then(([record, schemas]) => {
            const state: WizardState = {
                record,
                schemas,
                formOrder: Object.keys(schemas.forms),
                page: 0,
                submitKey: newIdempotencyKey(),
                submitting: false,
            };
            draw(state);
        })
        .catch(() => {
            root.append(h('div', { class: 'banner error' }, 'Could not load your record; retry.'));
        });

    function draw(state: WizardState): void {
        clear(root);
        if (state.record.workflow_state === 'ENROLLED') {
            drawEnrolled(state);
            return;
        }
        if (state.record.workflow_state !== 'ENROLLMENT_IN_PROGRESS') {
            root.append(
                h(
                    'p',
                    { 'data-role': 'not-open' },
                    `Enrollment is not open for this record (state ${state.record.workflow_state}).`,
                ),
            );
            return;
        }
        if (state.page >= state.formOrder.length) {
            drawReview(state);
        } else {
            drawFormPage(state);
        }
    }

    function progress(state: WizardState): HTMLElement {
        const steps = [...state.formOrder, 'REVIEW'];
        const bar = h('ol', { class: 'wizard-progress' });
        steps.forEach((step, index) => {
            bar.append(
                h(
                    'li',
                    {
                        'data-step': step,
                        class: index === state.page ? 'current' : index < state.page ? 'done' : '',
                    },
                    step,
                ),
            );
        });
        return bar;
    }

    function conflictBanner(state: WizardState): HTMLElement {
        return h(
            'div',
            { class: 'banner error', 'data-role': 'conflict' },
            'Someone else updated this record. ',
            h(
                'button',
                {
                    type: 'button',
                    'data-action': 'reload',
                    onclick: () => {
                        void api.getPatient(state.record.patient_id).then((fresh) => {
                            state.record = fresh;
                            draw(state);
                        });
                    },
                },
                'Reload and re-enter this page',
            ),
        );
    }

    function drawFormPage(state: WizardState): void {
        const formName = state.formOrder[state.page];
        const specs = state.schemas.forms[formName].fields;
        const saved = state.record.forms[formName]?.fields ?? {};
        const banner = h('div', { 'data-role': 'page-messages' });
        const form = h('form', { 'data-form-page': formName });
        const errorFor = new Map<string, HTMLElement>();
        for (const spec of specs) {
            const errorEl = h('span', { class: 'field-error', 'data-error-for': spec.name });
            errorFor.set(spec.name, errorEl);
            form.append(
                h(
                    'label',
                    { class: spec.required ? 'field required' : 'field', 'data-field': spec.name },
                    `${spec.name}${spec.required ? ' *' : ''}`,
                    fieldInput(spec, saved[spec.name]),
                    errorEl,
                ),
            );
        }
        const back = h('button', { type: 'button', 'data-action': 'back' }, 'Back');
        back.addEventListener('click', () => {
            if (state.page > 0) {
                state.page -= 1;
                draw(state);
            }
        });
        const save = h('button', { type: 'submit', 'data-action': 'save' }, 'Save and continue');
        form.append(back, save);
        form.addEventListener('submit', (event) => {
            event.preventDefault();
            const values: Record<string, unknown> = {};
            for (const spec of specs) {
                const input = form.querySelector<HTMLInputElement | HTMLSelectElement>(
                    `[name="${spec.name}"]`,
                );
                if (!input) continue;
                const parsed = parseValue(spec, input.value);
                const hadValue = saved[spec.name] !== undefined && saved[spec.name] !== null;
                if (parsed === null && !hadValue) continue; // nothing to clear
                values[spec.name] = parsed;
            }
            void api
                .writeForm(state.record.patient_id, formName, values, state.record.state_version)
                .then((updated) => {
                    state.record = updated;
                    state.page += 1;
                    draw(state);
                })
                .catch((err: unknown) => {
                    clear(banner);
                    if (err instanceof ApiError && err.status === 409) {
                        banner.append(conflictBanner(state));
                    } else if (err instanceof ApiError && err.status === 422) {
                        for (const el of errorFor.values()) el.textContent = '';
                        for (const detail of err.body.details ?? []) {
                            const [field, ...rest] = detail.split(':');
                            errorFor.get(field.trim())?.append(rest.join(':').trim());
                        }
                    } else if (err instanceof ApiError && err.status === 401) {
                        onLoggedOut();
                    } else {
                        banner.append(
                            h('div', { class: 'banner error' }, 'Save failed; please retry.'),
                        );
                    }
                });
        });
        root.append(h('h1', {}, `Enrollment forms: ${formName}`), progress(state), banner, form);
    }

    function drawReview(state: WizardState): void {
        const banner = h('div', { 'data-role': 'page-messages' });
        const checklist = h('ul', { class: 'review-checklist' });
        let allComplete = true;
        state.formOrder.forEach((formName, index) => {
            const status = state.record.forms[formName]?.status ?? 'EMPTY';
            if (status !== 'COMPLETE') allComplete = false;
            checklist.append(
                h(
                    'li',
                    { 'data-review-form': formName, 'data-status': status },
                    `${formName}: ${status} `,
                    h(
                        'button',
                        {
                            type: 'button',
                            'data-action': `edit-${formName}`,
                            onclick: () => {
                                state.page = index;
                                draw(state);
                            },
                        },
                        'Edit',
                    ),
                ),
            );
        });
        const submit = h(
            'button',
            { type: 'button', 'data-action': 'submit-enrollment' },
            'Submit enrollment',
        ) as HTMLButtonElement;
        submit.disabled = !allComplete || state.submitting;
        submit.addEventListener('click', () => {
            if (submit.disabled) return;
            submit.disabled = true; // double clicks replay nothing
            state.submitting = true;
            void api
                .submitEnrollment(
                    state.record.patient_id,
                    state.record.state_version,
                    state.submitKey,
                )
                .then((updated) => {
                    state.record = updated;
                    state.submitting = false;
                    draw(state);
                })
                .catch((err: unknown) => {
                    state.submitting = false;
                    clear(banner);
                    if (err instanceof ApiError && err.status === 409) {
                        banner.append(conflictBanner(state));
                    } else if (err instanceof ApiError && err.status === 422) {
                        const incomplete = err.body.details ?? [];
                        const jump = state.formOrder.findIndex((f) => incomplete.includes(f));
                        banner.append(
                            h(
                                'div',
                                { class: 'banner error', 'data-role': 'incomplete' },
                                `Still incomplete: ${incomplete.join(', ')}`,
                            ),
                        );
                        if (jump >= 0) {
                            state.page = jump; // jump to the offending form
                            draw(state);
                            return;
                        }
                        submit.disabled = false;
                    } else {
                        banner.append(
                            h('div', { class: 'banner error' }, 'Submission failed; retry.'),
                        );
                        submit.disabled = false;
                    }
                });
        });
        root.append(h('h1', {}, 'Review and submit'), progress(state), banner, checklist);
        if (!allComplete) {
            root.append(
                h(
                    'p',
                    { 'data-role': 'submit-blocked' },
                    'Every form must be COMPLETE before submission.',
                ),
            );
        }
        root.append(submit);
    }

    function drawEnrolled(state: WizardState): void {
        root.append(
            h('h1', { 'data-role': 'enrolled' }, 'Enrollment complete'),
            h(
                'p',
                {},
                'Your baseline information was submitted to the study. ',
                'Your site coordinator has been notified automatically.',
            ),
            h('p', { 'data-role': 'enrolled-state' }, `Record state: ${state.record.workflow_state}`),
        );
    }
}
