/**
 * Composition root: owns the view state and re-renders the active view.
 * The session token never leaves the ApiClient instance; nothing is
 * written to localStorage, sessionStorage, or cookies.
 */

import { AccountInfo, ApiClient } from './api.js';
import { clear, h } from './dom.js';
import { ViewState, initialState, loggedIn, loggedOut, navigate } from './state.js';
import { renderDashboard } from './views/dashboard.js';
import { renderChangePassword, renderLogin } from './views/login.js';
import { renderSelfCheck } from './views/selfCheck.js';
import { renderWizard } from './views/wizard.js';

export class PortalApp {
    state: ViewState = initialState();
    private api: ApiClient;

    constructor(
        private mount: HTMLElement,
        baseUrl: string,
    ) {
        this.api = new ApiClient(baseUrl);
    }

    render(): void {
        clear(this.mount);
        const header = this.header();
        const body = h('main', { 'data-active-view': this.state.activeView });
        this.mount.append(header, body);
        switch (this.state.activeView) {
            case 'SELF_CHECK':
                renderSelfCheck(body, this.api, () => this.goto('LOGIN'));
                break;
            case 'LOGIN':
                renderLogin(body, this.api, (account) => this.onLoggedIn(account));
                break;
            case 'CHANGE_PASSWORD':
                if (!this.state.account) {
                    this.goto('LOGIN');
                    return;
                }
                renderChangePassword(body, this.api, this.state.account, (account) => {
                    this.onLoggedIn(account);
                });
                break;
            case 'ENROLLMENT_WIZARD':
                if (!this.state.account) {
                    this.goto('LOGIN');
                    return;
                }
                renderWizard(body, this.api, this.state.account, () => this.onLoggedOut());
                break;
            case 'COORDINATOR_DASHBOARD':
            case 'ADMIN':
            case 'PATIENT_DETAIL':
                if (!this.state.account) {
                    this.goto('LOGIN');
                    return;
                }
                renderDashboard(body, this.api, this.state.account, () => this.onLoggedOut());
                break;
        }
    }

    goto(view: Parameters<typeof navigate>[1]): void {
        this.state = navigate(this.state, view);
        this.render();
    }

    private onLoggedIn(account: AccountInfo): void {
        this.state = loggedIn(this.state, account);
        this.render();
    }

    private onLoggedOut(): void {
        this.api.clearSession();
        this.state = loggedOut(this.state);
        this.render();
    }

    private header(): HTMLElement {
        const nav = h('nav', { 'data-role': 'top-nav' });
        nav.append(
            h(
                'button',
                { type: 'button', 'data-nav': 'SELF_CHECK', onclick: () => this.goto('SELF_CHECK') },
                'Eligibility check',
            ),
        );
        if (this.state.account) {
            nav.append(
                h('span', { 'data-role': 'whoami' }, `${this.state.account.username} (${this.state.account.role})`),
                h(
                    'button',
                    {
                        type: 'button',
                        'data-nav': 'logout',
                        onclick: () => {
                            void this.api.logout().finally(() => this.onLoggedOut());
                        },
                    },
                    'Sign out',
                ),
            );
        } else {
            nav.append(
                h('button', { type: 'button', 'data-nav': 'LOGIN', onclick: () => this.goto('LOGIN') }, 'Sign in'),
            );
        }
        return nav;
    }
}

export function bootstrap(mount: HTMLElement, baseUrl: string): PortalApp {
    const app = new PortalApp(mount, baseUrl);
    app.render();
    return app;
}
