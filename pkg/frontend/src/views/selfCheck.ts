/**
 * Anonymous eligibility self-check: the entry point of the public site.
 * Client-side validation mirrors the server's 422 contract so most
 * mistakes are caught before the wire; server errors render inline too.
 */

import { ApiClient, ApiError, CriterionInputs, SelfCheckResult } from '../api.js';
import { clear, h } from '../dom.js';

export const CRITERION_EXPLANATIONS: Record<string, { pass: string; fail: string }> = {
    non_palpable_dre: {
        pass: 'Tumor is not palpable on digital rectal examination.',
        fail: 'A tumor that can be felt on digital rectal examination does not meet the low-risk definition.',
    },
    non_aggressive_histology: {
        pass: 'Biopsy shows no aggressive microscopic morphology.',
        fail: 'Aggressive histological morphology on biopsy does not meet the low-risk definition.',
    },
    gleason_max: {
        pass: 'Gleason score is within the accepted range.',
        fail: 'Gleason score is above the cutoff for this protocol.',
    },
    psa_max: {
        pass: 'PSA level is within the accepted range.',
        fail: 'PSA level is above the cutoff for this protocol.',
    },
    core_fraction_max: {
        pass: 'Fraction of positive biopsy cores is within the accepted range.',
        fail: 'Too large a fraction of biopsy cores is positive for this protocol.',
    },
};

export interface SelfCheckFields {
    dre_palpable: string;
    histology_aggressive: string;
    gleason_score: string;
    psa_ng_ml: string;
    positive_cores: string;
    total_cores: string;
}

/** Mirror of the server-side input contract; returns per-field messages. */
export function validateSelfCheck(fields: SelfCheckFields): Map<string, string> {
    const errors = new Map<string, string>();
    for (const name of ['dre_palpable', 'histology_aggressive'] as const) {
        if (fields[name] !== 'YES' && fields[name] !== 'NO') {
            errors.set(name, 'choose YES or NO');
        }
    }
    const gleason = Number(fields.gleason_score);
    if (!Number.isInteger(gleason) || gleason < 2 || gleason > 10) {
        errors.set('gleason_score', 'integer between 2 and 10');
    }
    const psa = Number(fields.psa_ng_ml);
    if (fields.psa_ng_ml.trim() === '' || Number.isNaN(psa) || psa < 0) {
        errors.set('psa_ng_ml', 'non-negative number (ng/mL)');
    }
    const positive = Number(fields.positive_cores);
    const total = Number(fields.total_cores);
    if (!Number.isInteger(positive) || positive < 0) {
        errors.set('positive_cores', 'non-negative integer');
    }
    if (!Number.isInteger(total) || total < 1) {
        errors.set('total_cores', 'positive integer');
    }
    if (!errors.has('positive_cores') && !errors.has('total_cores') && positive > total) {
        errors.set('positive_cores', 'cannot exceed total cores');
    }
    return errors;
}

export function toInputs(fields: SelfCheckFields): CriterionInputs {
    return {
        dre_palpable: fields.dre_palpable === 'YES',
        histology_aggressive: fields.histology_aggressive === 'YES',
        gleason_score: Number(fields.gleason_score),
        psa_ng_ml: Number(fields.psa_ng_ml),
        positive_cores: Number(fields.positive_cores),
        total_cores: Number(fields.total_cores),
    };
}

export const FIELD_LABELS: Array<[keyof SelfCheckFields, string, 'yesno' | 'number']> = [
    ['dre_palpable', 'Could the tumor be felt on the digital rectal exam?', 'yesno'],
    ['histology_aggressive', 'Did the biopsy report aggressive morphology?', 'yesno'],
    ['gleason_score', 'Gleason score (2-10)', 'number'],
    ['psa_ng_ml', 'Most recent PSA (ng/mL)', 'number'],
    ['positive_cores', 'Biopsy cores positive for cancer', 'number'],
    ['total_cores', 'Total biopsy cores taken', 'number'],
];

export function renderSelfCheck(
    container: HTMLElement,
    api: ApiClient,
    onLoginRequested: () => void,
): void {
    clear(container);
    const errorBanner = h('div', { class: 'banner error', hidden: true });
    const resultPanel = h('section', { class: 'self-check-result' });
    const fieldErrors = new Map<string, HTMLElement>();

    const form = h('form', { class: 'self-check-form', 'data-view': 'self-check' });
    for (const [name, label, kind] of FIELD_LABELS) {
        const errorEl = h('span', { class: 'field-error', 'data-error-for': name });
        fieldErrors.set(name, errorEl);
        let input: HTMLElement;
        if (kind === 'yesno') {
            input = h(
                'select',
                { name },
                h('option', { value: '' }, 'Select...'),
                h('option', { value: 'NO' }, 'No'),
                h('option', { value: 'YES' }, 'Yes'),
            );
        } else {
            input = h('input', { name, type: 'text', inputmode: 'decimal' });
        }
        form.append(h('label', { class: 'field', 'data-field': name }, label, input, errorEl));
    }
    const submit = h('button', { type: 'submit' }, 'Check eligibility');
    form.append(submit);

    const readFields = (): SelfCheckFields => {
        const data = new FormData(form);
        const get = (name: string) => String(data.get(name) ?? '');
        return {
            dre_palpable: get('dre_palpable'),
            histology_aggressive: get('histology_aggressive'),
            gleason_score: get('gleason_score'),
            psa_ng_ml: get('psa_ng_ml'),
            positive_cores: get('positive_cores'),
            total_cores: get('total_cores'),
        };
    };

    const showFieldErrors = (errors: Map<string, string>) => {
        for (const [name, el] of fieldErrors) {
            el.textContent = errors.get(name) ?? '';
        }
    };

    const showResult = (result: SelfCheckResult) => {
        clear(resultPanel);
        const heading =
            result.overall === 'ELIGIBLE'
                ? 'You appear to meet the study criteria'
                : 'You do not appear to meet the study criteria';
        resultPanel.append(
            h('h2', { 'data-overall': result.overall }, heading),
            h('p', { class: 'next-steps' }, result.next_steps),
        );
        const list = h('ul', { class: 'criteria' });
        for (const [name, passed] of Object.entries(result.verdicts)) {
            const explanation = CRITERION_EXPLANATIONS[name];
            const text = explanation
                ? passed
                    ? explanation.pass
                    : explanation.fail
                : name;
            list.append(
                h(
                    'li',
                    { 'data-criterion': name, 'data-passed': String(passed), class: passed ? 'pass' : 'fail' },
                    `${passed ? 'OK' : 'Not met'}: ${text}`,
                ),
            );
        }
        resultPanel.append(list);
    };

    form.addEventListener('submit', (event) => {
        event.preventDefault();
        const fields = readFields();
        const errors = validateSelfCheck(fields);
        showFieldErrors(errors);
        if (errors.size > 0) return;
        errorBanner.hidden = true;
        void api
            .selfCheck(toInputs(fields))
            .then(showResult)
            .catch((err: unknown) => {
                if (err instanceof ApiError && err.status === 422) {
                    const serverErrors = new Map<string, string>();
                    for (const detail of err.body.details ?? []) {
                        const [field, ...rest] = detail.split(':');
                        serverErrors.set(field.trim(), rest.join(':').trim());
                    }
                    showFieldErrors(serverErrors);
                } else {
                    errorBanner.textContent =
                        'The service could not be reached. Your answers were not sent; please retry.';
                    errorBanner.hidden = false;
                }
            });
    });

    container.append(
        h('h1', {}, 'Prostate cancer surveillance study: eligibility self-check'),
        h(
            'p',
            { class: 'intro' },
            'Answer the questions below to see whether you may be a candidate. ',
            'Nothing you enter here is stored or linked to you.',
        ),
        errorBanner,
        form,
        resultPanel,
        h(
            'p',
            {},
            'Already have portal credentials? ',
            h('button', { type: 'button', 'data-action': 'go-login', onclick: onLoginRequested }, 'Sign in'),
        ),
    );
}
